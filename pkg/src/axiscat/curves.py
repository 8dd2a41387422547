"""
Generating curves of axis-symmetric obstacles.

A surface of revolution is described by its generating curve in the (r, z)
half-plane, written in star-shaped form

    gamma(t) = p(t) * (cos(pi (t - 0.5)), sin(pi (t - 0.5))),  t in [0, 1]

with a band-limited radial profile

    p(t) = p0 + sum_j pc_j cos(2 pi j (t - 0.5)) + ps_j sin(2 pi j (t - 0.5)).

The endpoints t = 0 and t = 1 sit on the symmetry axis. This module
evaluates profiles and their differential frame, splits the curve into
Gauss-Legendre panels for the Nystrom solver, and maps points between the
world frame and the frame of a (possibly tilted and shifted) symmetry axis.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np
from scipy.fft import rfft
from scipy.spatial.transform import Rotation
from scipy.special import roots_legendre

from .errors import DegenerateFrameError, InvalidCurveError, PanelLimitError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]

GAUSS_ORDER = 16
POSITIVITY_SAMPLES = 1024
MIN_JACOBIAN = 1e-13


@dataclass(frozen=True)
class BandLimitedRadialCurve:
    """
    Truncated Fourier radial profile.

    The same type holds Gauss-Newton update polynomials h(t), which may be
    negative; positivity is only enforced by `check_positive` and by the
    operations that need a valid obstacle.

    Attributes:
        p0: Constant coefficient
        cos_coeffs: Cosine coefficients for modes 1..band_limit
        sin_coeffs: Sine coefficients for modes 1..band_limit
    """
    p0: float
    cos_coeffs: Tuple[float, ...] = ()
    sin_coeffs: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "p0", float(self.p0))
        object.__setattr__(self, "cos_coeffs", tuple(float(c) for c in self.cos_coeffs))
        object.__setattr__(self, "sin_coeffs", tuple(float(c) for c in self.sin_coeffs))
        if len(self.cos_coeffs) != len(self.sin_coeffs):
            raise InvalidCurveError(
                f"cosine and sine coefficient counts differ "
                f"({len(self.cos_coeffs)} vs {len(self.sin_coeffs)})"
            )
        values = (self.p0,) + self.cos_coeffs + self.sin_coeffs
        if not all(math.isfinite(v) for v in values):
            raise InvalidCurveError("curve coefficients must be finite")

    @property
    def band_limit(self) -> int:
        return len(self.cos_coeffs)

    @classmethod
    def constant(cls, radius: float) -> "BandLimitedRadialCurve":
        return cls(radius)

    @classmethod
    def from_vector(cls, coeffs: ArrayLike, band_limit: int) -> "BandLimitedRadialCurve":
        """Build from the stacked vector [p0, pc_1..pc_N, ps_1..ps_N]."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (2 * band_limit + 1,):
            raise InvalidCurveError(
                f"expected {2 * band_limit + 1} coefficients for band limit "
                f"{band_limit}, got {coeffs.size}"
            )
        return cls(
            coeffs[0],
            tuple(coeffs[1:band_limit + 1]),
            tuple(coeffs[band_limit + 1:]),
        )

    def to_vector(self) -> np.ndarray:
        return np.concatenate(([self.p0], self.cos_coeffs, self.sin_coeffs))

    def with_band_limit(self, band_limit: int) -> "BandLimitedRadialCurve":
        """Zero-pad or truncate the coefficient sequences."""
        if band_limit < 0:
            raise InvalidCurveError("band limit must be non-negative")
        n = self.band_limit
        if band_limit >= n:
            pad = (0.0,) * (band_limit - n)
            return BandLimitedRadialCurve(self.p0, self.cos_coeffs + pad, self.sin_coeffs + pad)
        return BandLimitedRadialCurve(
            self.p0, self.cos_coeffs[:band_limit], self.sin_coeffs[:band_limit]
        )

    def plus(self, other: "BandLimitedRadialCurve", scale: float = 1.0) -> "BandLimitedRadialCurve":
        """Return self + scale * other on the larger of the two band limits."""
        n = max(self.band_limit, other.band_limit)
        a = self.with_band_limit(n).to_vector()
        b = other.with_band_limit(n).to_vector()
        return BandLimitedRadialCurve.from_vector(a + scale * b, n)

    def is_positive(self, samples: int = POSITIVITY_SAMPLES) -> bool:
        t = np.linspace(0.0, 1.0, samples)
        return bool(np.all(eval_radial(self, t) > 0.0))

    def check_positive(self, samples: int = POSITIVITY_SAMPLES) -> None:
        """
        Raise unless p(t) > 0 on a uniform sample of [0, 1].

        Raises:
            InvalidCurveError: If the radial profile is not positive
        """
        t = np.linspace(0.0, 1.0, samples)
        p = eval_radial(self, t)
        if np.any(p <= 0.0):
            i = int(np.argmin(p))
            raise InvalidCurveError(
                f"radial profile is not positive: p({t[i]:.4f}) = {p[i]:.4g}"
            )

    def max_radius(self, samples: int = POSITIVITY_SAMPLES) -> float:
        """Largest distance from the origin of the generating curve."""
        t = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(eval_radial(self, t))))


@dataclass(frozen=True)
class CurvePoint:
    """Point of the generating curve with its differential frame."""
    t: float
    r: float
    z: float
    dr_dt: float
    dz_dt: float
    normal: Tuple[float, float]
    jacobian: float


@dataclass(frozen=True)
class CurveFrame:
    """Vectorized counterpart of CurvePoint over an array of parameters."""
    t: np.ndarray
    r: np.ndarray
    z: np.ndarray
    dr_dt: np.ndarray
    dz_dt: np.ndarray
    nr: np.ndarray
    nz: np.ndarray
    jacobian: np.ndarray


def _check_parameter(t: np.ndarray) -> None:
    if np.any(t < 0.0) or np.any(t > 1.0) or not np.all(np.isfinite(t)):
        raise ValueError("curve parameter t must lie in [0, 1]")


def _radial_terms(curve: BandLimitedRadialCurve, t: np.ndarray):
    j = np.arange(1, curve.band_limit + 1, dtype=float)
    phase = 2.0 * np.pi * np.multiply.outer(t - 0.5, j)
    return j, np.cos(phase), np.sin(phase)


def eval_radial(curve: BandLimitedRadialCurve, t: ArrayLike) -> Union[float, np.ndarray]:
    """
    Evaluate the radial profile p(t).

    Args:
        curve: Band-limited radial curve
        t: Parameter value(s) in [0, 1]

    Returns:
        p(t), scalar for scalar input

    Raises:
        ValueError: If t lies outside [0, 1]
    """
    t_arr = np.asarray(t, dtype=float)
    _check_parameter(t_arr)
    if curve.band_limit == 0:
        p = np.full(t_arr.shape, curve.p0)
    else:
        _, c, s = _radial_terms(curve, t_arr)
        p = curve.p0 + c @ np.asarray(curve.cos_coeffs) + s @ np.asarray(curve.sin_coeffs)
    return float(p) if np.ndim(t) == 0 else p


def eval_radial_derivative(curve: BandLimitedRadialCurve, t: ArrayLike) -> np.ndarray:
    """Term-wise derivative p'(t)."""
    t_arr = np.asarray(t, dtype=float)
    _check_parameter(t_arr)
    if curve.band_limit == 0:
        return np.zeros(t_arr.shape)
    j, c, s = _radial_terms(curve, t_arr)
    w = 2.0 * np.pi * j
    return -s @ (w * np.asarray(curve.cos_coeffs)) + c @ (w * np.asarray(curve.sin_coeffs))


def curve_frame(curve: BandLimitedRadialCurve, t: ArrayLike) -> CurveFrame:
    """
    Positions, derivatives and outward normals at many parameters.

    Raises:
        DegenerateFrameError: If the curve speed drops below 1e-13
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    p = np.atleast_1d(eval_radial(curve, t_arr))
    dp = np.atleast_1d(eval_radial_derivative(curve, t_arr))
    angle = np.pi * (t_arr - 0.5)
    ca, sa = np.cos(angle), np.sin(angle)
    # Exact zero radius on the axis endpoints.
    ca = np.where((t_arr == 0.0) | (t_arr == 1.0), 0.0, ca)
    r = p * ca
    z = p * sa
    dr = dp * ca - np.pi * p * sa
    dz = dp * sa + np.pi * p * ca
    jac = np.hypot(dr, dz)
    if np.any(jac < MIN_JACOBIAN):
        i = int(np.argmin(jac))
        raise DegenerateFrameError(f"curve speed vanishes at t = {t_arr[i]:.6g}")
    return CurveFrame(t_arr, r, z, dr, dz, dz / jac, -dr / jac, jac)


def eval_curve_frame(curve: BandLimitedRadialCurve, t: float) -> CurvePoint:
    """
    Evaluate the generating curve and its frame at a single parameter.

    The normal is the unit tangent rotated by -pi/2, which points away from
    the axis for a circle.

    Args:
        curve: Band-limited radial curve
        t: Parameter in [0, 1]

    Returns:
        CurvePoint at t

    Raises:
        DegenerateFrameError: If the curve speed drops below 1e-13
    """
    f = curve_frame(curve, t)
    return CurvePoint(
        t=float(t),
        r=float(f.r[0]),
        z=float(f.z[0]),
        dr_dt=float(f.dr_dt[0]),
        dz_dt=float(f.dz_dt[0]),
        normal=(float(f.nr[0]), float(f.nz[0])),
        jacobian=float(f.jacobian[0]),
    )


@dataclass(frozen=True)
class Panel:
    """One Gauss-Legendre panel of the generating curve."""
    t_start: float
    t_end: float
    nodes: np.ndarray
    weights: np.ndarray
    points: Tuple[CurvePoint, ...] = field(repr=False)

    @property
    def length(self) -> float:
        return float(sum(w * p.jacobian for w, p in zip(self.weights, self.points)))


@dataclass(frozen=True)
class DiscretizedCurve:
    """
    Panelized quadrature of a generating curve.

    The flat arrays hold one entry per node, panel-major; `weights` are the
    Gauss-Legendre weights in t, so that sum(weights * jacobian) is the
    arclength.
    """
    curve: BandLimitedRadialCurve
    panels: Tuple[Panel, ...]
    wavenumber_hint: float
    points_per_wavelength: float
    t: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    z: np.ndarray = field(repr=False)
    nr: np.ndarray = field(repr=False)
    nz: np.ndarray = field(repr=False)
    jacobian: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    panel_index: np.ndarray = field(repr=False)

    @property
    def node_count(self) -> int:
        return int(self.t.size)

    @property
    def panel_count(self) -> int:
        return len(self.panels)

    @property
    def arclength_weights(self) -> np.ndarray:
        return self.weights * self.jacobian

    @property
    def panel_lengths(self) -> np.ndarray:
        return np.array([p.length for p in self.panels])

    @property
    def panel_bounds(self) -> np.ndarray:
        return np.array([(p.t_start, p.t_end) for p in self.panels])

    def panel_slice(self, index: int) -> slice:
        return slice(index * GAUSS_ORDER, (index + 1) * GAUSS_ORDER)


def _gauss_rule(order: int = GAUSS_ORDER) -> Tuple[np.ndarray, np.ndarray]:
    x, w = roots_legendre(order)
    return x, w


def _panel_arclength(curve: BandLimitedRadialCurve, a: float, b: float) -> float:
    x, w = _gauss_rule()
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    jac = curve_frame(curve, t).jacobian
    return float(0.5 * (b - a) * np.dot(w, jac))


def build_panels(
    curve: BandLimitedRadialCurve,
    k: float,
    ppw: float = 12.0,
    max_panels: int = 4096,
    min_panels: int = 8,
) -> DiscretizedCurve:
    """
    Split the generating curve into 16-node Gauss-Legendre panels.

    Intervals of t are halved until each panel is shorter than
    (2 pi / k) * (16 / ppw) in arclength and no longer than 1.33 / N_p in
    parameter, then the longest panels are halved until at least
    `min_panels` exist.

    Args:
        curve: Valid band-limited curve
        k: Wavenumber used for sizing
        ppw: Points per wavelength, at least 12
        max_panels: Refinement cap
        min_panels: Lower bound on the panel count

    Returns:
        DiscretizedCurve with 16 * #panels nodes

    Raises:
        ValueError: If k <= 0 or ppw < 12
        InvalidCurveError: If the profile is not positive
        PanelLimitError: If more than max_panels panels would be needed
    """
    if not k > 0:
        raise ValueError("wavenumber must be positive")
    if ppw < 12:
        raise ValueError("points per wavelength must be at least 12")
    curve.check_positive()

    max_arclength = (2.0 * np.pi / k) * (GAUSS_ORDER / ppw)
    max_dt = 1.33 / curve.band_limit if curve.band_limit > 0 else 1.0

    def too_coarse(a: float, b: float) -> bool:
        return (b - a) > max_dt or _panel_arclength(curve, a, b) > max_arclength

    pending = [(0.0, 1.0)]
    done: List[Tuple[float, float]] = []
    while pending:
        a, b = pending.pop()
        if too_coarse(a, b):
            m = 0.5 * (a + b)
            pending.extend([(m, b), (a, m)])
            if len(pending) + len(done) > max_panels:
                raise PanelLimitError(
                    f"panel count would exceed the cap of {max_panels} at k={k}"
                )
        else:
            done.append((a, b))

    while len(done) < min_panels:
        lengths = [_panel_arclength(curve, a, b) for a, b in done]
        i = int(np.argmax(lengths))
        a, b = done.pop(i)
        m = 0.5 * (a + b)
        done[i:i] = [(a, m), (m, b)]
    done.sort()
    return discretize_on(curve, done, k, ppw)


def discretize_on(
    curve: BandLimitedRadialCurve,
    bounds: Sequence[Tuple[float, float]],
    k: float,
    ppw: float = 12.0,
) -> DiscretizedCurve:
    """
    Place Gauss-Legendre panels on given parameter intervals.

    Used directly when nearby curves must share one panel layout.
    """
    x, w = _gauss_rule()
    panels = []
    for a, b in bounds:
        a, b = float(a), float(b)
        t = 0.5 * (b - a) * x + 0.5 * (a + b)
        f = curve_frame(curve, t)
        points = tuple(
            CurvePoint(
                t=float(f.t[i]), r=float(f.r[i]), z=float(f.z[i]),
                dr_dt=float(f.dr_dt[i]), dz_dt=float(f.dz_dt[i]),
                normal=(float(f.nr[i]), float(f.nz[i])),
                jacobian=float(f.jacobian[i]),
            )
            for i in range(GAUSS_ORDER)
        )
        panels.append(Panel(a, b, t, 0.5 * (b - a) * w, points))

    t_all = np.concatenate([p.nodes for p in panels])
    f = curve_frame(curve, t_all)
    disc = DiscretizedCurve(
        curve=curve,
        panels=tuple(panels),
        wavenumber_hint=float(k),
        points_per_wavelength=float(ppw),
        t=t_all,
        r=f.r,
        z=f.z,
        nr=f.nr,
        nz=f.nz,
        jacobian=f.jacobian,
        weights=np.concatenate([p.weights for p in panels]),
        panel_index=np.repeat(np.arange(len(panels)), GAUSS_ORDER),
    )
    logger.debug(
        "Discretized curve: %d panels, %d nodes (k=%.3g, ppw=%.3g)",
        disc.panel_count, disc.node_count, k, ppw,
    )
    return disc


@dataclass(frozen=True)
class AxisFrame:
    """
    Orientation and location of a symmetry axis.

    The axis direction is (sin(polar) cos(azimuth), sin(polar) sin(azimuth),
    cos(polar)); it passes through (h1, h2, 0). The rotation into the frame
    follows the z-y-z Euler convention with zero spin about the axis.
    """
    polar: float = 0.0
    azimuth: float = 0.0
    center_xy: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not 0.0 <= self.polar <= np.pi:
            raise ValueError("polar angle must lie in [0, pi]")
        object.__setattr__(self, "azimuth", float(self.azimuth) % (2.0 * np.pi))
        object.__setattr__(self, "center_xy", (float(self.center_xy[0]), float(self.center_xy[1])))

    @property
    def direction(self) -> np.ndarray:
        sp = np.sin(self.polar)
        return np.array([sp * np.cos(self.azimuth), sp * np.sin(self.azimuth), np.cos(self.polar)])

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_xy[0], self.center_xy[1], 0.0])

    @property
    def rotation(self) -> Rotation:
        """Rotation taking +z onto the axis direction."""
        return Rotation.from_euler("ZYZ", [self.azimuth, self.polar, 0.0])

    @property
    def is_identity(self) -> bool:
        return self.polar == 0.0 and self.azimuth == 0.0 and self.center_xy == (0.0, 0.0)


def world_to_axis_frame(point: ArrayLike, frame: AxisFrame) -> np.ndarray:
    """
    Express world point(s) in the frame whose +z axis is the symmetry axis.

    Args:
        point: 3-vector or (n, 3) array
        frame: Axis frame

    Returns:
        Transformed point(s), same shape as the input
    """
    x = np.asarray(point, dtype=float)
    if frame.is_identity:
        return x.copy()
    return frame.rotation.inv().apply(x - frame.center)


def axis_frame_to_world(point: ArrayLike, frame: AxisFrame) -> np.ndarray:
    """Inverse of world_to_axis_frame."""
    x = np.asarray(point, dtype=float)
    if frame.is_identity:
        return x.copy()
    return frame.rotation.apply(x) + frame.center


def direction_to_axis_frame(direction: ArrayLike, frame: AxisFrame) -> np.ndarray:
    """Rotate direction vector(s) into the axis frame (no translation)."""
    d = np.asarray(direction, dtype=float)
    if frame.is_identity:
        return d.copy()
    return frame.rotation.inv().apply(d)


def fourier_fit(profile, band_limit: int, samples: int = 4096) -> BandLimitedRadialCurve:
    """
    Project a callable profile p(t) on the band-limited basis.

    The profile is sampled on a uniform periodic grid of [0, 1) and the
    coefficients are read off its real FFT.
    """
    t = np.arange(samples) / samples
    values = np.asarray(profile(t), dtype=float)
    # Shift so the basis phase 2 pi j (t - 0.5) lines up with the FFT.
    spec = rfft(values) / samples * np.exp(-1j * np.pi * np.arange(samples // 2 + 1))
    j = np.arange(1, band_limit + 1)
    return BandLimitedRadialCurve(
        spec[0].real,
        tuple(2.0 * spec[j].real),
        tuple(-2.0 * spec[j].imag),
    )


def sphere_curve(radius: float = 1.0) -> BandLimitedRadialCurve:
    return BandLimitedRadialCurve.constant(radius)


def ellipsoid_curve(radius_r: float, radius_z: float, band_limit: int = 32) -> BandLimitedRadialCurve:
    """Ellipse generating curve with semi-axes radius_r (equator) and radius_z (axis)."""
    def profile(t):
        a = np.pi * (t - 0.5)
        return 1.0 / np.sqrt((np.cos(a) / radius_r) ** 2 + (np.sin(a) / radius_z) ** 2)
    return fourier_fit(profile, band_limit)


def star_curve(p0: float = 1.5, amplitude: float = 0.3, mode: int = 8) -> BandLimitedRadialCurve:
    """Single-mode star profile p0 + amplitude * cos(2 pi mode (t - 0.5))."""
    cos_coeffs = [0.0] * mode
    cos_coeffs[mode - 1] = amplitude
    return BandLimitedRadialCurve(p0, tuple(cos_coeffs), (0.0,) * mode)


def mine_curve(
    half_width: float = 1.0,
    half_height: float = 0.5,
    exponent: float = 24.0,
    band_limit: int = 64,
) -> BandLimitedRadialCurve:
    """
    Flat cylinder silhouette with rounded edges.

    The edge is the superellipse |r/w|^q + |z/h|^q = 1, which keeps the
    corners sharp on the scale of the reconstruction but smooth for the
    quadrature. Coefficients are damped with Lanczos sigma factors to limit
    Gibbs ringing of the truncated projection.
    """
    def profile(t):
        a = np.pi * (t - 0.5)
        c = np.abs(np.cos(a)) / half_width
        s = np.abs(np.sin(a)) / half_height
        return (c ** exponent + s ** exponent) ** (-1.0 / exponent)
    raw = fourier_fit(profile, band_limit)
    j = np.arange(1, band_limit + 1)
    sigma = np.sinc(j / (band_limit + 1))
    return BandLimitedRadialCurve(
        raw.p0,
        tuple(np.asarray(raw.cos_coeffs) * sigma),
        tuple(np.asarray(raw.sin_coeffs) * sigma),
    )


BUILTIN_CURVES = {
    "sphere": lambda: sphere_curve(1.0),
    "spheroid": lambda: ellipsoid_curve(1.0, 2.0, 32),
    "ellipsoid": lambda: ellipsoid_curve(1.0, 2.0, 32),
    "star8": lambda: star_curve(1.5, 0.3, 8),
    "mine": lambda: mine_curve(),
}


def builtin_curve(name: str) -> BandLimitedRadialCurve:
    """
    Look up a named truth curve.

    Raises:
        ValueError: If the name is unknown
    """
    try:
        return BUILTIN_CURVES[name]()
    except KeyError:
        raise ValueError(
            f"unknown builtin curve '{name}' (choose from {', '.join(sorted(BUILTIN_CURVES))})"
        ) from None


def cross_section(curve: BandLimitedRadialCurve, samples: int = 1024) -> np.ndarray:
    """
    Closed cross-section polyline of the obstacle in the (x, z) plane.

    Returns:
        (2 * samples - 1, 2) array running from the south pole through the
        +x side to the north pole and back along the -x side
    """
    t = np.linspace(0.0, 1.0, samples)
    p = eval_radial(curve, t)
    a = np.pi * (t - 0.5)
    right = np.column_stack((p * np.cos(a), p * np.sin(a)))
    left = right[-2::-1] * np.array([-1.0, 1.0])
    return np.vstack((right, left))
