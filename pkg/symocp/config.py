"""Configuration management for symocp."""

import logging
import os
import yaml
from pathlib import Path
from typing import Optional, Dict, Any

logger = logging.getLogger(__name__)


class ConfigurationManager:
    """Manages persisted solver and recovery defaults."""

    def __init__(self, config_dir: Optional[str] = None):
        """Initialize configuration manager.

        Args:
            config_dir: Directory to store configuration files. Defaults to ~/.symocp
        """
        if config_dir is None:
            config_dir = os.path.expanduser("~/.symocp")

        self.config_dir = Path(config_dir)
        self.config_file = self.config_dir / "config.yaml"
        self._ensure_config_dir()
        self._config = self._load_config()

    def _ensure_config_dir(self) -> None:
        """Ensure configuration directory exists."""
        self.config_dir.mkdir(parents=True, exist_ok=True)

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from file."""
        if not self.config_file.exists():
            return self._get_default_config()

        try:
            with open(self.config_file, 'r') as f:
                config = yaml.safe_load(f) or {}
                # Merge with defaults to ensure all keys exist
                default_config = self._get_default_config()
                default_config.update(config)
                return default_config
        except (yaml.YAMLError, IOError) as e:
            logger.warning("Could not load config file: %s", e)
            return self._get_default_config()

    def _get_default_config(self) -> Dict[str, Any]:
        """Get default configuration."""
        return {
            "backend": "clarabel",
            "tol": 1e-8,
            "max_iter": 200,
            "inaccurate_tol": 1e-5,
            "slack": 1e-6,
            "eps": 1e-5,
            "tgrid": 400,
            "ygrid": 1000,
            "seed": 0,
            "branch_tol": 0.05,
            "tmax": 2.0,
        }

    def _save_config(self) -> None:
        """Save configuration to file."""
        try:
            with open(self.config_file, 'w') as f:
                yaml.dump(self._config, f, default_flow_style=False)
        except IOError as e:
            logger.warning("Could not save config file: %s", e)

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value.

        Args:
            key: Configuration key
            default: Default value if key doesn't exist

        Returns:
            Configuration value
        """
        return self._config.get(key, default)

    def set(self, key: str, value: Any) -> None:
        """Set configuration value.

        Args:
            key: Configuration key
            value: Value to set
        """
        self._config[key] = value
        self._save_config()

    def as_dict(self) -> Dict[str, Any]:
        return dict(self._config)

    def get_backend(self) -> str:
        """Get solver backend from environment or config."""
        return os.getenv("SYMOCP_BACKEND") or self.get("backend", "clarabel")

    def set_backend(self, backend: str) -> None:
        self.set("backend", backend)

    def get_tol(self) -> float:
        return float(self.get("tol", 1e-8))

    def get_max_iter(self) -> int:
        return int(self.get("max_iter", 200))

    def get_slack(self) -> float:
        """Relative and absolute slack on the cost cap of selection SDPs."""
        return float(self.get("slack", 1e-6))

    def get_eps(self) -> float:
        """Moment tolerance of the feasibility test."""
        return float(self.get("eps", 1e-5))

    def get_tgrid(self) -> int:
        return int(self.get("tgrid", 400))

    def get_ygrid(self) -> int:
        return int(self.get("ygrid", 1000))

    def get_seed(self) -> int:
        return int(self.get("seed", 0))

    def get_tmax(self) -> float:
        """Upper bound on the free final time of built-in problems."""
        return float(self.get("tmax", 2.0))
