"""
axiscat: acoustic scattering by axis-symmetric sound-soft obstacles.

This package provides a modal boundary-integral forward solver for
surfaces of revolution, recovery of the symmetry axis from far-field
patterns, and multifrequency shape reconstruction of the generating curve
by damped Gauss-Newton steps.
"""

__version__ = "0.1.0"
__author__ = "axiscat contributors"
__license__ = "Apache-2.0 OR GPL-3.0-or-later"

from .config import Config
from .curves import AxisFrame, BandLimitedRadialCurve, build_panels
from .forward import ForwardSolver, IncidentWave, MeasurementSet, forward_operator
from .inversion import InversionConfig, damped_gauss_newton, recursive_linearization

__all__ = [
    "AxisFrame",
    "BandLimitedRadialCurve",
    "Config",
    "ForwardSolver",
    "IncidentWave",
    "InversionConfig",
    "MeasurementSet",
    "build_panels",
    "damped_gauss_newton",
    "forward_operator",
    "recursive_linearization",
]
