"""Tests for configuration management."""

import pytest
import tempfile
import yaml
from symocp.config import ConfigurationManager


class TestConfigurationManager:
    """Test cases for ConfigurationManager."""

    def test_default_config(self):
        """Test default configuration values."""
        with tempfile.TemporaryDirectory() as temp_dir:
            config = ConfigurationManager(temp_dir)

            assert config.get("backend") == "clarabel"
            assert config.get_tol() == 1e-8
            assert config.get_max_iter() == 200
            assert config.get_slack() == 1e-6
            assert config.get_eps() == 1e-5
            assert config.get_tgrid() == 400
            assert config.get_ygrid() == 1000
            assert config.get_seed() == 0
            assert config.get_tmax() == 2.0

    def test_set_and_get(self):
        """Test setting and getting configuration values."""
        with tempfile.TemporaryDirectory() as temp_dir:
            config = ConfigurationManager(temp_dir)

            config.set("seed", 7)
            assert config.get_seed() == 7

            config.set("custom_key", "value")
            assert config.get("custom_key") == "value"

    def test_values_persist(self):
        """Test that values survive a reload from disk."""
        with tempfile.TemporaryDirectory() as temp_dir:
            ConfigurationManager(temp_dir).set("tgrid", 250)

            config = ConfigurationManager(temp_dir)
            assert config.get_tgrid() == 250
            assert config.get_ygrid() == 1000

    def test_backend_from_env(self, monkeypatch):
        """Test backend selection from environment variable."""
        with tempfile.TemporaryDirectory() as temp_dir:
            config = ConfigurationManager(temp_dir)

            monkeypatch.setenv("SYMOCP_BACKEND", "ipm")
            assert config.get_backend() == "ipm"

            monkeypatch.delenv("SYMOCP_BACKEND")
            config.set_backend("ipm")
            assert config.get_backend() == "ipm"

    def test_corrupt_file_falls_back_to_defaults(self, tmp_path):
        """Test that an unreadable config file is ignored."""
        (tmp_path / "config.yaml").write_text("backend: [clarabel\n")
        config = ConfigurationManager(str(tmp_path))
        assert config.get("backend") == "clarabel"

    @pytest.mark.parametrize("text", ["", "tol: 1.0e-6\n"])
    def test_partial_file_is_merged(self, tmp_path, text):
        (tmp_path / "config.yaml").write_text(text)
        config = ConfigurationManager(str(tmp_path))
        assert config.get_max_iter() == 200
        assert config.as_dict()["eps"] == 1e-5

    def test_saved_file_is_yaml(self, tmp_path):
        config = ConfigurationManager(str(tmp_path))
        config.set("eps", 1e-4)
        saved = yaml.safe_load(config.config_file.read_text())
        assert saved["eps"] == 1e-4
        assert saved["backend"] == "clarabel"
