import json

import pytest

from services.config import ConfigManager, GridConfig, LabConfig, RuntimeSettings
from services.exceptions import ConfigurationError, ValidationError


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for name in ("BLAB_LOG_LEVEL", "BLAB_DATA_DIR", "BLAB_WORKERS"):
        monkeypatch.delenv(name, raising=False)


def write_config(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


class TestLabConfig:
    def test_comments_are_stripped(self):
        config = LabConfig.from_dict({"_comments": {"description": "x"}, "grid": {"nx": 16}})
        assert config.grid.nx == 16
        assert config.grid.ny == 32

    def test_unknown_section(self):
        with pytest.raises(ConfigurationError):
            LabConfig.from_dict({"plotting": {}})

    def test_control_region_sits_in_the_strip(self):
        grid = GridConfig(nx=30, ny=20)
        x0, x1, y0, y1 = grid.control_region
        x_gamma = 20 * grid.lx / 30
        assert x_gamma < x0 < x1 < grid.lx
        assert 0.0 < y0 < y1 < grid.ly

    def test_section_defaults(self):
        config = LabConfig.default()
        assert config.layer.dissipation_window == [0.8, 0.95]
        assert config.expansion.claimed_rates["final_error"] == 0.125
        assert config.flushing.amplitude_support == [0.05, 0.75]
        assert config.expansion.cross_check
        assert config.hum.fixed_point_terminal_tol == 0.01


class TestConfigManager:
    def test_missing_file(self, tmp_path):
        manager = ConfigManager(str(tmp_path / "absent.json"))
        with pytest.raises(ConfigurationError):
            manager.load_config()
        config = manager.load_config(allow_missing=True)
        assert config == LabConfig.default()

    def test_save_and_load(self, tmp_path):
        path = tmp_path / "nested" / "config.json"
        manager = ConfigManager(str(path))
        config = LabConfig.default()
        config.grid.nx = 48
        manager.save_config(config)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert "_comments" in data
        assert ConfigManager(str(path)).load_config() == config

    def test_save_without_configuration(self, tmp_path):
        with pytest.raises(ConfigurationError):
            ConfigManager(str(tmp_path / "c.json")).save_config()

    @pytest.mark.parametrize("data", [
        {"grid": {"nx": 4}},
        {"solver": {"cfl": 1.5}},
        {"flushing": {"amplitude_support": [0.5, 0.2]}},
        {"layer": {"dissipation_window": [0.5, 0.9]}},
        {"expansion": {"mode": "inviscid"}},
        {"expansion": {"epsilons": [0.1, 1.5]}},
        {"hum": {"nonlinearity": "quartic"}},
        {"hum": {"fixed_point_terminal_tol": 0.0}},
        {"strategy": {"target": "random"}},
        {"strategy": {"epsilon": 0.0}},
    ])
    def test_invalid_values(self, tmp_path, data):
        with pytest.raises(ValidationError):
            ConfigManager(write_config(tmp_path / "config.json", data)).load_config()

    def test_broken_json(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{ not json", encoding="utf-8")
        with pytest.raises(ConfigurationError):
            ConfigManager(str(path)).load_config()

    def test_getters(self, tmp_path):
        manager = ConfigManager(write_config(tmp_path / "config.json", {"hum": {"penalty": 1e-4}}))
        assert manager.get_hum_config() is None
        manager.load_config()
        assert manager.get_hum_config().penalty == 1e-4
        assert manager.get_strategy_config().horizon == 1.0
        assert manager.get_logging_config().file == "logs/lab.log"

    def test_example_config(self, tmp_path):
        path = tmp_path / "config.example.json"
        ConfigManager().create_example_config(str(path))
        assert ConfigManager(str(path)).load_config() == LabConfig.default()


class TestRuntimeSettings:
    def test_environment_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv("BLAB_LOG_LEVEL", "debug")
        monkeypatch.setenv("BLAB_DATA_DIR", str(tmp_path / "runs"))
        monkeypatch.setenv("BLAB_WORKERS", "3")
        config = ConfigManager(str(tmp_path / "absent.json")).load_config(allow_missing=True)
        assert config.logging.level == "DEBUG"
        assert config.storage.data_dir == str(tmp_path / "runs")
        assert config.strategy.workers == 3
        assert config.flushing.workers == 3

    def test_no_overrides(self):
        config = RuntimeSettings().apply(LabConfig.default())
        assert config == LabConfig.default()
