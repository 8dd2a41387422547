"""
Exception types raised by axiscat.

Argument and geometry problems derive from ValueError so that callers
catching ValueError keep working; numerical failures derive from
ArithmeticError or RuntimeError.
"""


class AxiscatError(Exception):
    """Base class for all axiscat errors."""


class ConfigError(AxiscatError, ValueError):
    """Invalid configuration value or malformed configuration file."""


class FileFormatError(AxiscatError, ValueError):
    """A data file could not be parsed. Message carries path and line."""

    def __init__(self, path: str, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class InvalidCurveError(AxiscatError, ValueError):
    """Generating curve with inconsistent coefficients or non-positive radius."""


class DegenerateFrameError(AxiscatError, ValueError):
    """Curve speed vanishes so no tangent or normal is defined."""


class PanelLimitError(AxiscatError, RuntimeError):
    """Panel refinement would exceed the configured cap."""


class CoincidentPointError(AxiscatError, ValueError):
    """Source and target ring touch, the modal kernel is singular."""


class QuadratureError(AxiscatError, RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


class SpecialFunctionOverflow(AxiscatError, OverflowError):
    """A special function value left the floating-point range."""


class NearSurfaceError(AxiscatError, ValueError):
    """Evaluation point too close to the obstacle for smooth quadrature."""


class SphereGridError(AxiscatError, ValueError):
    """Receptors do not form a recognized sphere grid."""


class FitResidualError(AxiscatError, RuntimeError):
    """Spherical-harmonic fit of sphere data left a large residual."""


class AmbiguousOrientationError(AxiscatError, RuntimeError):
    """Two well-separated candidate poles score almost equally."""

    def __init__(self, message: str, best=None, runner_up=None):
        self.best = best
        self.runner_up = runner_up
        super().__init__(message)


class SearchBoundaryError(AxiscatError, RuntimeError):
    """A scan minimum sits on the end of its search interval."""


class ShapeMismatchError(AxiscatError, ValueError):
    """Matrix or vector dimensions do not agree."""
