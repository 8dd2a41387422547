"""Shared pytest configuration and fixtures."""

import pytest

from axiscat.config import Config
from axiscat.curves import ellipsoid_curve, sphere_curve, star_curve


@pytest.fixture
def fast_config():
    """Fixture providing a configuration sized for quick solves."""
    config = Config()
    config.set("farfield", "n_theta", 40)
    config.set("farfield", "n_phi", 40)
    config.set("axis", "pole_n_theta", 16)
    config.set("axis", "pole_n_phi", 16)
    config.set("axis", "center_points", 41)
    return config


@pytest.fixture
def unit_sphere():
    """Fixture providing the unit sphere."""
    return sphere_curve(1.0)


@pytest.fixture
def spheroid():
    """Fixture providing a prolate 1:2 spheroid with a short expansion."""
    return ellipsoid_curve(1.0, 2.0, 8)


@pytest.fixture
def star8():
    """Fixture providing the eight-lobed star profile."""
    return star_curve(1.5, 0.3, 8)


@pytest.fixture
def cache_dir(tmp_path, monkeypatch):
    """Fixture pointing the oracle cache at a fresh directory."""
    path = tmp_path / "cache"
    monkeypatch.setenv("AXISCAT_CACHE", str(path))
    return path
