"""
Modular FRF Redesign Toolkit
============================

Derives frequency response specifications for individual modules of an
interconnected mechanical system, such that any redesign meeting its module
spec keeps the whole system within its own spec.

Usage:
    python main.py synthesize --builder two_dof --gamma 0.05 --out out
    python main.py verify-module --module-spec out/module_1.spec.json --candidate m1.json
    python main.py sweep --builder two_dof --gamma 0.05 --cells 41

Configuration:
    Edit modspec.json to change solver, parallel and verification settings.
    MODSPEC_JOBS sets the default number of worker processes.
"""

import sys

from src.logger import AppLogger
from src.cli import main as cli_main


def main() -> None:
    """Entry point for the application."""
    # Initialize logger first
    logger = AppLogger.setup(log_level="INFO")
    exit_code = 1
    try:
        exit_code = cli_main(sys.argv[1:])
    except Exception as e:
        logger.exception(f"Fatal error: {e}")
        raise
    finally:
        logger.debug(f"Shutting down with exit code {exit_code}")
        logger.debug("=" * 60)
    sys.exit(exit_code)


if __name__ == "__main__":
    main()
