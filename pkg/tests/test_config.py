import json
import pytest
from dataclasses import dataclass
from pathlib import Path
from smtalign.config import Config, ConfigError, build_config
from smtalign.svr import SvrConfig

@pytest.fixture
def test_config_path():
    """Return the path to the test configuration file."""
    return str(Path(__file__).parent / 'fixtures' / 'test_config.yaml')

@pytest.fixture
def config(test_config_path):
    """Create a Config instance with test configuration."""
    Config.reset()  # Reset any existing configuration
    return Config.initialize(config_file=test_config_path)

def test_config_loads_test_values(config):
    """Test that configuration values are loaded correctly from test YAML."""
    assert config.seed == 7
    assert config.experiment_label == "line-3"
    assert config.section('svr')['epsilon'] == 0.2
    assert config.section('es')['generations'] == 4

def test_defaults_are_merged_under_user_file(config):
    """Settings missing from the user file come from the packaged defaults."""
    assert config.section('svr')['c_penalty'] == 1.0
    assert config.section('es')['mu'] == 5
    assert config.section('generator')['records_per_type'] == 660
    assert config.source.endswith('test_config.yaml')

def test_singleton_behavior(config):
    """Test that Config class behaves as a singleton."""
    config2 = Config.get_instance()
    assert config is config2

def test_config_immutability(config):
    """Test that configuration values cannot be modified after loading."""
    with pytest.raises(ValueError):
        config.seed = 8

def test_new_settings_are_rejected(config):
    with pytest.raises(ValueError):
        config.operator = "night shift"

def test_config_file_found_in_working_directory(tmp_path, monkeypatch):
    """Test dat config.yaml in de huidige map gevonden wordt."""
    (tmp_path / 'config.yaml').write_text("seed: 5\n")
    monkeypatch.chdir(tmp_path)
    Config.reset()
    config = Config.initialize()
    assert config.seed == 5
    assert config.source == str(tmp_path / 'config.yaml')

def test_missing_attribute(config):
    """Test that accessing a non-existent configuration raises AttributeError."""
    with pytest.raises(AttributeError):
        _ = config.non_existent_setting

def test_section_is_a_copy(config):
    section = config.section('svr')
    section['epsilon'] = 99
    assert config.section('svr')['epsilon'] == 0.2

def test_missing_section_is_empty(config):
    assert config.section('no_such_section') == {}

def test_all_sections_present(config):
    """Test that all sections used by the commands are present."""
    for name in ['artifacts', 'generator', 'svr', 'rfr', 'thresholds', 'es', 'evaluation']:
        assert config.section(name), f"Missing section: {name}"

def test_hash_changes_with_settings(config, tmp_path):
    first = config.hash
    other = tmp_path / 'config.json'
    other.write_text(json.dumps({"seed": 8}))
    Config.reset()
    second = Config.initialize(config_file=str(other)).hash
    assert first != second

def test_json_config_file(tmp_path):
    """JSON is valid YAML, so a JSON settings file loads as well."""
    path = tmp_path / 'settings.json'
    path.write_text(json.dumps({"svr": {"epsilon": 0.05}, "seed": 3}))
    Config.reset()
    config = Config.initialize(config_file=str(path))
    assert config.seed == 3
    assert config.section('svr')['epsilon'] == 0.05
    assert config.section('svr')['max_passes'] == 1000

def test_non_mapping_file_is_rejected(tmp_path):
    path = tmp_path / 'list.yaml'
    path.write_text("- 1\n- 2\n")
    Config.reset()
    with pytest.raises(ConfigError):
        Config.initialize(config_file=str(path))

def test_build_config_from_section(config):
    svr_config = build_config(SvrConfig, config.section('svr'), 'svr')
    assert svr_config == SvrConfig(epsilon=0.2)

def test_build_config_unknown_key_names_field():
    with pytest.raises(ConfigError, match=r"svr\.gamma"):
        build_config(SvrConfig, {"gamma": 1.0}, 'svr')

def test_build_config_invalid_value_names_field():
    with pytest.raises(ConfigError, match=r"svr\.c_penalty"):
        build_config(SvrConfig, {"c_penalty": 0}, 'svr')

def test_build_config_empty_section_gives_defaults():
    @dataclass(frozen=True)
    class Example:
        size: int = 3

    assert build_config(Example, None, 'example') == Example()
