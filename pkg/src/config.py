"""
Configuration management for the toolkit.

Handles loading configuration from modspec.json and environment variables.
"""

import json
import os
from typing import Dict, Any, Optional

from src.domain.models import SynthesisOptions
from src.logger import get_logger

logger = get_logger()

JOBS_ENV_VAR = "MODSPEC_JOBS"


class Config:
    """Toolkit configuration manager."""

    def __init__(self, config_file: Optional[str] = "modspec.json") -> None:
        self.config_file = config_file
        self.settings = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file and merge with defaults."""
        defaults = {
            "assembly": {
                "rcond_threshold": 1e-12
            },
            "synthesis": {
                "eps": 1e-4,
                "max_iters": 50,
                "eps_pd_rel": 1e-9,
                "weight_floor": 1e-12,
                "d_bounds": [1e-6, 1e6],
                "solver": "CLARABEL",
                "tighten_steps": 30
            },
            "parallel": {
                "jobs": 1,
                "worker_timeout": 600
            },
            "verification": {
                "n_samples": 1000,
                "seed": 42,
                "region_cells": 41,
                "region_span": 0.6,
                "alpha_sweep": 9,
                "bisection_tol": 1e-4
            },
            "logging": {
                "level": "INFO",
                "dir": "logs"
            }
        }

        # Try to load from file if it exists
        if self.config_file and os.path.exists(self.config_file):
            try:
                with open(self.config_file, "r", encoding="utf-8") as f:
                    file_config = json.load(f)
                    # File config takes precedence
                    defaults = self._deep_merge(defaults, file_config)
                    logger.info(f"Loaded configuration from {self.config_file}")
            except (json.JSONDecodeError, IOError) as e:
                logger.warning(f"Could not load config file: {e}, using defaults")

        return defaults

    def _deep_merge(self, base: Dict, override: Dict) -> Dict:
        """Recursively merge two dictionaries."""
        result = base.copy()
        for key, value in override.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = value
        return result

    def get(self, *keys: str, default: Any = None) -> Any:
        """
        Get a configuration value using a path of keys.

        Example: config.get("synthesis", "max_iters")
        """
        result = self.settings
        for key in keys:
            if isinstance(result, dict) and key in result:
                result = result[key]
            else:
                return default
        return result

    def set(self, *keys: str, value: Any) -> None:
        """
        Set a configuration value using a path of keys.

        Example: config.set("synthesis", "eps", 1e-6)

        Note: Creates nested dictionaries if they don't exist.
        Does NOT auto-save - call save() explicitly.
        """
        if len(keys) == 0:
            raise ValueError("At least one key is required")

        current = self.settings
        for key in keys[:-1]:
            if key not in current or not isinstance(current[key], dict):
                current[key] = {}
            current = current[key]

        current[keys[-1]] = value

    def save(self) -> None:
        """Save current configuration to file."""
        if not self.config_file:
            return
        try:
            with open(self.config_file, "w", encoding="utf-8") as f:
                json.dump(self.settings, f, indent=2)
            logger.debug(f"Configuration saved to {self.config_file}")
        except IOError as e:
            logger.error(f"Error saving config file: {e}")

    def get_rcond_threshold(self) -> float:
        """Reciprocal condition number below which an interconnection is ill-posed."""
        return float(self.get("assembly", "rcond_threshold", default=1e-12))

    def get_synthesis_options(self) -> SynthesisOptions:
        """Build the solver options for the alternating synthesis."""
        d_low, d_high = self.get("synthesis", "d_bounds", default=[1e-6, 1e6])
        return SynthesisOptions(
            eps=float(self.get("synthesis", "eps", default=1e-4)),
            max_iters=int(self.get("synthesis", "max_iters", default=50)),
            eps_pd_rel=float(self.get("synthesis", "eps_pd_rel", default=1e-9)),
            weight_floor=float(self.get("synthesis", "weight_floor", default=1e-12)),
            d_min=float(d_low),
            d_max=float(d_high),
            solver=str(self.get("synthesis", "solver", default="CLARABEL")),
            tighten_steps=int(self.get("synthesis", "tighten_steps", default=30)),
        )

    def get_jobs(self) -> int:
        """Get the worker pool size; the MODSPEC_JOBS environment variable wins over the file."""
        env_value = os.environ.get(JOBS_ENV_VAR, "")
        if env_value:
            try:
                return max(1, int(env_value))
            except ValueError:
                logger.warning(f"Ignoring non-integer {JOBS_ENV_VAR}={env_value!r}")
        return max(1, int(self.get("parallel", "jobs", default=1)))

    def get_worker_timeout(self) -> int:
        """Get the timeout in seconds for one per-frequency worker task."""
        return int(self.get("parallel", "worker_timeout", default=600))

    def get_n_samples(self) -> int:
        """Number of random module perturbations drawn by the guarantee check."""
        return int(self.get("verification", "n_samples", default=1000))

    def get_seed(self) -> int:
        """Seed for the single random generator of a run."""
        return int(self.get("verification", "seed", default=42))

    def get_region_cells(self) -> int:
        """Cells per axis of a parameter-region sweep."""
        return int(self.get("verification", "region_cells", default=41))

    def get_region_span(self) -> float:
        """Relative half-width of a parameter-region sweep around nominal."""
        return float(self.get("verification", "region_span", default=0.6))

    def get_alpha_sweep(self) -> int:
        """Number of cost-weight distributions tried by the modular region sweep."""
        return int(self.get("verification", "alpha_sweep", default=9))

    def get_bisection_tol(self) -> float:
        """Relative tolerance of the per-module parameter bisection."""
        return float(self.get("verification", "bisection_tol", default=1e-4))

    def get_log_level(self) -> str:
        return str(self.get("logging", "level", default="INFO"))

    def get_log_dir(self) -> str:
        return str(self.get("logging", "dir", default="logs"))
