"""
Configuration management for axiscat.

This module handles loading configuration settings for the solvers and the
experiment harness. Configuration can be loaded from YAML files or provided
programmatically; every key has a default.
"""

import copy
import os
import re
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError


class Config:
    """
    Configuration manager for axiscat.

    This class handles loading configuration from YAML files and provides
    default values for all solver and harness parameters.

    Sections:
        forward: Panel sizing, mode truncation and threading of the forward solver
        farfield: Far-field grid and sphere-data harmonic fit
        axis: Pole grid, acceptance threshold and centre search
        inversion: Defaults for the Gauss-Newton and frequency sweep settings
        scene: Truth obstacle, illumination, receptors, noise and seed
        bench: Wavenumbers and panel sizing of the timing runs
        oracles: Reference-solution cache
        output: Output directory and plot selection
    """

    DEFAULT_CONFIG = {
        "forward": {
            "points_per_wavelength": 12.0,
            "max_panels": 4096,
            "min_panels": 8,
            "mode_tolerance": 1e-12,
            "threads": 1,
        },
        "farfield": {
            "n_theta": 100,
            "n_phi": 100,
            "degree_margin": 12,
            "fit_tolerance": 1e-6,
        },
        "axis": {
            "wavenumber": 3.0,
            "generic_direction": [-0.3826834323650898, 0.0, 0.9238795325112867],
            "pole_n_theta": 100,
            "pole_n_phi": 100,
            "ambiguity": 0.1,
            "accept_threshold": 1e-3,
            "x_range": [-4.0, 4.0],
            "y_range": [-4.0, 4.0],
            "center_points": 200,
            "center_tolerance": 1e-3,
        },
        "inversion": {
            "alpha": 0.1,
            "alpha_rule": "scaled",
            "alpha_first": 0.1,
            "nit": 10,
            "eps_r": 0.03,
            "eps_s": 0.03,
            "np_factor": 2.0,
            "np_max": None,
            "filter_sigma2": None,
            "kmin": 0.5,
            "kmax": 6.5,
            "kstep": 0.25,
            "initial_radius": 1.0,
            "initial_curve": None,
        },
        "scene": {
            "truth": "star8",
            "frame": {"polar": 0.0, "azimuth": 0.0, "center": [0.0, 0.0]},
            "directions": "broadside",
            "receptors": {
                "layout": "ring",
                "count": 100,
                "radius": 10.0,
                "start_deg": -90.0,
                "aperture": None,
            },
            "wavenumbers": None,
            "noise": 0.02,
            "seed": 20240,
        },
        "bench": {
            "wavenumbers": [2.0, 4.0, 8.0],
            "points_per_wavelength": 100.0,
            "min_panels": 1,
        },
        "oracles": {
            "cache_dir": "~/.cache/axiscat",
        },
        "output": {
            "directory": "axiscat-out",
            "plot_wavenumbers": None,
            "cross_section_samples": 1024,
        },
    }

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration.

        Args:
            config_path: Path to YAML configuration file. If None, uses defaults.
        """
        self.config = copy.deepcopy(self.DEFAULT_CONFIG)
        self.path = config_path

        if config_path and os.path.exists(config_path):
            self.load_from_file(config_path)

    def load_from_file(self, path: str) -> None:
        """
        Load configuration from YAML file.

        Args:
            path: Path to YAML configuration file

        Raises:
            FileNotFoundError: If config file doesn't exist
            ConfigError: If config file is invalid YAML or not a mapping
        """
        with open(path, "r") as f:
            try:
                user_config = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"{path}: invalid YAML: {e}") from e
        if user_config is None:
            return
        if not isinstance(user_config, dict):
            raise ConfigError(f"{path}: top level must be a mapping of sections")
        self._merge_config(user_config)

    def _merge_config(self, user_config: Dict[str, Any]) -> None:
        """
        Merge user configuration with defaults.

        Args:
            user_config: User-provided configuration dictionary
        """
        for section, values in user_config.items():
            if section in self.config and isinstance(values, dict):
                self.config[section].update(values)
            else:
                self.config[section] = values

    def get(self, section: str, key: str) -> Any:
        """
        Get configuration value.

        Args:
            section: Configuration section name
            key: Configuration key within section

        Returns:
            Configuration value

        Raises:
            KeyError: If section or key doesn't exist
        """
        return self.config[section][key]

    def get_section(self, section: str) -> Dict[str, Any]:
        """
        Get entire configuration section.

        Args:
            section: Configuration section name

        Returns:
            Dictionary of configuration values for the section
        """
        return self.config.get(section, {})

    def set(self, section: str, key: str, value: Any) -> None:
        self.config.setdefault(section, {})[key] = value


def frequency_schedule(kmin: float, kmax: float, kstep: float):
    """Wavenumbers kmin, kmin + kstep, ..., kmax (inclusive up to rounding)."""
    if kstep <= 0 or kmax < kmin:
        raise ConfigError("frequency schedule needs kstep > 0 and kmax >= kmin")
    count = int(round((kmax - kmin) / kstep)) + 1
    return tuple(round(kmin + i * kstep, 12) for i in range(count))


_INVERSION_KEYS = {
    "alpha": float,
    "alpha_first": float,
    "alpha_rule": str,
    "nit": int,
    "eps_r": float,
    "eps_s": float,
    "np_rule": str,
    "np_max": int,
    "filter_sigma2": float,
    "kmin": float,
    "kmax": float,
    "kstep": float,
}

_NP_RULE = re.compile(r"^\s*([0-9.]*)\s*k\s*$")


def inversion_config_from_mapping(values: Dict[str, Any]):
    """
    Build an InversionConfig from the inversion section or a parsed key=value file.

    Raises:
        ConfigError: On unknown rules or inconsistent values
    """
    from .inversion import InversionConfig

    np_factor = values.get("np_factor", 2.0)
    if values.get("np_rule") is not None:
        match = _NP_RULE.match(str(values["np_rule"]))
        if not match:
            raise ConfigError(f"np_rule must look like '2k', got '{values['np_rule']}'")
        np_factor = float(match.group(1)) if match.group(1) else 1.0
    if values.get("schedule") is not None:
        schedule = tuple(values["schedule"])
    else:
        schedule = frequency_schedule(
            float(values.get("kmin", 0.5)), float(values.get("kmax", 6.5)), float(values.get("kstep", 0.25))
        )
    none_or = lambda key, cast: None if values.get(key) is None else cast(values[key])  # noqa: E731
    return InversionConfig(
        alpha=float(values.get("alpha", 0.1)),
        alpha_rule=str(values.get("alpha_rule", "scaled")),
        alpha_first=none_or("alpha_first", float),
        max_iters=int(values.get("nit", 10)),
        residual_tol=float(values.get("eps_r", 0.03)),
        step_tol=float(values.get("eps_s", 0.03)),
        np_factor=float(np_factor),
        np_max=none_or("np_max", int),
        filter_sigma2=none_or("filter_sigma2", float),
        schedule=schedule,
    )


def load_inversion_config(path: str, base: Optional[Dict[str, Any]] = None):
    """
    Parse a key=value inversion settings file.

    Blank lines and lines starting with '#' are skipped. Keys override the
    optional base mapping (usually the inversion section of a Config).

    Raises:
        ConfigError: With the line number of a malformed or unknown entry
    """
    values: Dict[str, Any] = dict(base or {})
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in _INVERSION_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key '{key}'")
            if value.lower() in ("", "none"):
                values[key] = None
                continue
            try:
                values[key] = _INVERSION_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value '{value}' for {key}") from None
    try:
        return inversion_config_from_mapping(values)
    except ConfigError as e:
        raise ConfigError(f"{path}: {e}") from e
