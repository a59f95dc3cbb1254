"""
Centralized logging configuration for the toolkit.

Provides consistent logging across all modules with console and optional file output.
"""

import logging
import os
from datetime import datetime
from typing import Optional


class AppLogger:
    """Application logger with console and file handlers."""

    _initialized = False
    _logger: Optional[logging.Logger] = None

    @classmethod
    def setup(cls, log_level: str = "INFO", log_dir: Optional[str] = None,
              force: bool = False) -> logging.Logger:
        """
        Set up the application logger.

        Args:
            log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
            log_dir: Directory to store log files; None or "" keeps console only
            force: Reconfigure even if already initialized (the CLI uses this
                once it has read the configuration)

        Returns:
            Configured logger instance
        """
        if cls._initialized and not force:
            return cls._logger

        logger = logging.getLogger("ModSpec")
        logger.setLevel(getattr(logging, log_level.upper(), logging.INFO))
        logger.propagate = False

        # Prevent duplicate handlers
        if logger.handlers:
            for handler in list(logger.handlers):
                handler.close()
            logger.handlers.clear()

        # Console handler (INFO and above)
        console_handler = logging.StreamHandler()
        console_handler.setLevel(logging.INFO)
        console_handler.setFormatter(logging.Formatter('%(levelname)s: %(message)s'))
        logger.addHandler(console_handler)

        # File handler (DEBUG and above)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
            log_filename = os.path.join(
                log_dir,
                f"modspec_{datetime.now().strftime('%Y%m%d')}.log"
            )
            file_handler = logging.FileHandler(log_filename, encoding='utf-8')
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(logging.Formatter(
                '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                datefmt='%Y-%m-%d %H:%M:%S'
            ))
            logger.addHandler(file_handler)

        cls._logger = logger
        cls._initialized = True

        if log_dir:
            logger.debug("=" * 60)
            logger.debug("ModSpec session started")
            logger.debug("=" * 60)

        return logger

    @classmethod
    def get_logger(cls) -> logging.Logger:
        """
        Get the application logger.

        Returns:
            Logger instance (console-only defaults if not already set up)
        """
        if not cls._initialized:
            return cls.setup()
        return cls._logger


# Convenience function for getting logger
def get_logger() -> logging.Logger:
    """Get the application logger."""
    return AppLogger.get_logger()
