"""Tests for configuration module."""

import os
import tempfile

import pytest

from axiscat.config import Config, frequency_schedule, inversion_config_from_mapping, load_inversion_config
from axiscat.errors import ConfigError


def test_default_config():
    """Test default configuration loads correctly."""
    config = Config()

    assert config.get("forward", "points_per_wavelength") == 12.0
    assert config.get("farfield", "n_theta") == 100
    assert config.get("axis", "accept_threshold") == 1e-3
    assert config.get("inversion", "alpha_rule") == "scaled"
    assert config.get("scene", "seed") == 20240


def test_load_from_file():
    """Test loading configuration from file."""
    config_yaml = """
forward:
  points_per_wavelength: 16.0

scene:
  truth: mine
  noise: 0.0
"""

    with tempfile.NamedTemporaryFile(mode='w', suffix='.yaml', delete=False) as f:
        f.write(config_yaml)
        temp_path = f.name

    try:
        config = Config(temp_path)

        assert config.get("forward", "points_per_wavelength") == 16.0
        assert config.get("scene", "truth") == "mine"
        assert config.get("scene", "noise") == 0.0
        # Default value should still be present
        assert config.get("forward", "max_panels") == 4096
        assert config.get("scene", "seed") == 20240
    finally:
        os.unlink(temp_path)


def test_get_section():
    """Test getting entire configuration section."""
    config = Config()

    section = config.get_section("inversion")

    assert isinstance(section, dict)
    assert "alpha" in section
    assert "kstep" in section
    assert config.get_section("missing") == {}


def test_set_does_not_touch_defaults():
    """Test that overriding a value leaves other instances alone."""
    config = Config()
    config.set("forward", "threads", 8)

    assert config.get("forward", "threads") == 8
    assert Config().get("forward", "threads") == 1


def test_nonexistent_file():
    """Test that nonexistent file doesn't crash."""
    config = Config("/nonexistent/path/config.yaml")

    assert config.get("forward", "points_per_wavelength") == 12.0


def test_invalid_yaml(tmp_path):
    """Test that a non-mapping file is rejected."""
    path = tmp_path / "bad.yaml"
    path.write_text("- just\n- a list\n")

    with pytest.raises(ConfigError):
        Config(str(path))


def test_shipped_configs_load():
    """Test that the example configurations parse and merge."""
    root = os.path.join(os.path.dirname(__file__), "..", "config")
    for name in ("default_config.yaml", "example1.yaml", "example2.yaml", "example3.yaml", "example5.yaml"):
        config = Config(os.path.join(root, name))
        assert "scene" in config.config

    assert Config(os.path.join(root, "example5.yaml")).get("scene", "truth") == "mine"


def test_frequency_schedule():
    """Test the inclusive frequency ladder."""
    ks = frequency_schedule(0.5, 6.5, 0.25)

    assert len(ks) == 25
    assert ks[0] == 0.5
    assert ks[-1] == 6.5
    assert ks[1] == 0.75

    with pytest.raises(ConfigError):
        frequency_schedule(2.0, 1.0, 0.25)
    with pytest.raises(ConfigError):
        frequency_schedule(0.5, 1.0, 0.0)


def test_inversion_config_from_defaults():
    """Test building inversion settings from the default section."""
    cfg = inversion_config_from_mapping(Config().get_section("inversion"))

    assert cfg.max_iters == 10
    assert cfg.band_limit(3.0) == 6
    assert cfg.schedule[-1] == 6.5


def test_load_inversion_config(tmp_path):
    """Test the key=value inversion file."""
    path = tmp_path / "run.inv"
    path.write_text(
        "# configuration 3\n"
        "alpha = 0.1\n"
        "nit=10\n"
        "np_rule = 2k\n"
        "np_max = 8   # cap\n"
        "filter_sigma2 = none\n"
        "kmin=0.5\nkmax=1.0\nkstep=0.25\n"
    )

    cfg = load_inversion_config(str(path))

    assert cfg.np_max == 8
    assert cfg.filter_sigma2 is None
    assert cfg.schedule == (0.5, 0.75, 1.0)
    assert cfg.band_limit(6.5) == 8


def test_load_inversion_config_errors(tmp_path):
    """Test that malformed lines report their line number."""
    path = tmp_path / "bad.inv"
    path.write_text("alpha=0.1\nbogus=3\n")
    with pytest.raises(ConfigError, match=":2:"):
        load_inversion_config(str(path))

    path.write_text("alpha=0.1\nnit\n")
    with pytest.raises(ConfigError, match=":2:"):
        load_inversion_config(str(path))

    path.write_text("nit=ten\n")
    with pytest.raises(ConfigError, match=":1:"):
        load_inversion_config(str(path))

    path.write_text("np_rule=k^2\n")
    with pytest.raises(ConfigError):
        load_inversion_config(str(path))
