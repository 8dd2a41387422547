"""
Special functions and modal Green's functions.

For a target ring (r, z) and a source ring (r', z') the modal Green's
functions are the azimuthal Fourier coefficients

    G_m(r, z, r', z') = int_0^{2 pi} e^{ik rho}/rho e^{-i m theta} d theta,
    rho^2 = (r - r')^2 + (z - z')^2 + 4 r r' sin^2(theta / 2),

of the free-space kernel e^{ik rho}/rho (no 1/(4 pi) factor here), together
with the azimuthal coefficients of its source-normal derivative (double
layer) and target-normal derivative (adjoint double layer).

Two evaluation routes are used:

* well-separated pairs: equispaced trapezoidal sampling in theta followed by
  one FFT, which yields every mode at once;
* close pairs: a Gauss-Legendre rule on [0, pi] graded geometrically toward
  theta = 0, where the integrand peaks, contracted against cos(m theta).
"""

import logging
import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.fft import fft
from scipy.special import jv, jvp, roots_legendre, spherical_jn, spherical_yn

from .errors import CoincidentPointError, QuadratureError, SpecialFunctionOverflow

logger = logging.getLogger(__name__)

MIN_RHO = 1e-14
FFT_SEPARATION = 0.5
MAX_GRADING_LEVELS = 48
_CHUNK_ELEMENTS = 2_000_000


def bessel_j(m: int, x):
    """
    Cylindrical Bessel function J_m(x) of integer order.

    Negative orders use J_{-m} = (-1)^m J_m.
    """
    m = int(m)
    if m < 0:
        return (-1) ** (-m) * jv(-m, x)
    return jv(m, x)


def bessel_jp(m: int, x):
    """Derivative J_m'(x) of integer order."""
    m = int(m)
    if m < 0:
        return (-1) ** (-m) * jvp(-m, x)
    return jvp(m, x)


def spherical_wave_functions(l: int, x) -> Tuple[np.ndarray, np.ndarray]:
    """
    Spherical Bessel j_l and outgoing spherical Hankel h_l^(1).

    Args:
        l: Degree, l >= 0
        x: Positive argument(s)

    Returns:
        Tuple (j_l(x), h_l^(1)(x))

    Raises:
        ValueError: If l < 0 or x <= 0
        SpecialFunctionOverflow: If h_l^(1)(x) is not finite
    """
    if l < 0:
        raise ValueError("degree must be non-negative")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr <= 0):
        raise ValueError("argument must be positive")
    j = spherical_jn(l, x_arr)
    y = spherical_yn(l, x_arr)
    if not np.all(np.isfinite(y)):
        raise SpecialFunctionOverflow(f"spherical Hankel function of degree {l} overflows")
    h = j + 1j * y
    if np.ndim(x) == 0:
        return float(j), complex(h)
    return j, h


def spherical_wave_derivatives(l: int, x) -> Tuple[np.ndarray, np.ndarray]:
    """Derivatives j_l'(x) and h_l^(1)'(x)."""
    x_arr = np.asarray(x, dtype=float)
    jd = spherical_jn(l, x_arr, derivative=True)
    yd = spherical_yn(l, x_arr, derivative=True)
    if not np.all(np.isfinite(yd)):
        raise SpecialFunctionOverflow(f"spherical Hankel derivative of degree {l} overflows")
    return jd, jd + 1j * yd


@dataclass(frozen=True)
class SourceTargetPair:
    """
    Target ring and source ring in the (r, z) half-plane.

    `panel_length` is the length of the source panel and only feeds the
    separation ratio that selects the evaluation route.
    """
    target: Tuple[float, float]
    source: Tuple[float, float]
    source_normal: Tuple[float, float] = (1.0, 0.0)
    target_normal: Tuple[float, float] = (1.0, 0.0)
    panel_length: float = 1.0

    def __post_init__(self):
        if self.target[0] < 0 or self.source[0] < 0:
            raise ValueError("ring radii must be non-negative")

    @property
    def min_rho(self) -> float:
        return math.hypot(self.target[0] - self.source[0], self.target[1] - self.source[1])

    @property
    def separation_ratio(self) -> float:
        return self.min_rho / self.panel_length


@dataclass(frozen=True)
class ModalKernelPair:
    """Single-layer value, source-normal derivative and target-normal derivative."""
    single: complex
    double: complex
    adjoint: Optional[complex] = None


class KernelTable(NamedTuple):
    """Modal kernels for P pairs, each (P, number of requested modes)."""
    single: np.ndarray
    double: np.ndarray
    adjoint: Optional[np.ndarray]


def _ring_integrands(geom, k, sin2, adjoint: bool):
    """Integrand values on theta samples; geom arrays have shape (P, 1)."""
    r, z, rs, zs, nrs, nzs, nrt, nzt = geom
    dr, dz = r - rs, z - zs
    rho = np.sqrt(dr * dr + dz * dz + 4.0 * r * rs * sin2)
    e = np.exp(1j * k * rho)
    single = e / rho
    g = (1j * k * rho - 1.0) * e / rho ** 3
    double = g * (nrs * (-dr + 2.0 * r * sin2) - nzs * dz)
    adj = g * (nrt * (dr + 2.0 * rs * sin2) + nzt * dz) if adjoint else None
    return single, double, adj


def _trapezoid_count(m_max, k, r, rs, rho_min) -> np.ndarray:
    kr = np.abs(k) * (r + rs)
    near = 16.0 * np.sqrt(r * rs) / rho_min
    n = 2 * np.maximum.reduce([
        np.full(r.shape, m_max + 1.0),
        np.ceil(6.0 * kr),
        np.full(r.shape, 64.0),
        np.ceil(near),
    ])
    return (2 ** np.ceil(np.log2(n))).astype(int)


def _grading_levels(r, rs, rho_min) -> np.ndarray:
    eps = rho_min / np.maximum(np.sqrt(r * rs), 1e-300)
    levels = np.ceil(np.log2(np.pi / np.minimum(eps, np.pi))) + 1
    return np.maximum(levels, 1).astype(int)


_GL_X, _GL_W = roots_legendre(16)


def graded_theta_rule(levels: int, max_width: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Composite 16-point Gauss-Legendre rule on [0, pi] graded toward 0.

    Breakpoints are pi 2^-levels, ..., pi/2; intervals wider than
    max_width are split evenly.
    """
    if levels > MAX_GRADING_LEVELS:
        raise QuadratureError(
            f"near-singular ring integral needs {levels} grading levels "
            f"(cap {MAX_GRADING_LEVELS})"
        )
    breaks = [0.0] + [np.pi * 2.0 ** (-l) for l in range(levels, 0, -1)] + [np.pi]
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        pieces = max(1, int(np.ceil((b - a) / max_width)))
        edges = np.linspace(a, b, pieces + 1)
        for lo, hi in zip(edges[:-1], edges[1:]):
            half = 0.5 * (hi - lo)
            nodes.append(half * _GL_X + 0.5 * (hi + lo))
            weights.append(half * _GL_W)
    return np.concatenate(nodes), np.concatenate(weights)


def _chunks(count: int, per_item: int):
    step = max(1, _CHUNK_ELEMENTS // max(per_item, 1))
    for start in range(0, count, step):
        yield slice(start, min(count, start + step))


def _fft_route(geom, idx, n, modes, k, adjoint, out):
    theta = 2.0 * np.pi * np.arange(n) / n
    sin2 = np.sin(0.5 * theta) ** 2
    for sl in _chunks(idx.size, n):
        sub = idx[sl]
        g = tuple(a[sub, None] for a in geom)
        values = _ring_integrands(g, k, sin2, adjoint)
        for slot, f in zip(out, values):
            if slot is not None:
                slot[sub] = (2.0 * np.pi / n) * fft(f, axis=1)[:, modes]


def _graded_route(geom, idx, levels, modes, k, adjoint, out):
    r, rs = geom[0][idx], geom[2][idx]
    omega = 0.5 * np.abs(k) * np.max(r + rs) + modes[-1] + 1.0
    theta, w = graded_theta_rule(levels, min(np.pi / 2, 8.0 / omega))
    sin2 = np.sin(0.5 * theta) ** 2
    basis = 2.0 * w[:, None] * np.cos(np.outer(theta, modes))
    for sl in _chunks(idx.size, theta.size):
        sub = idx[sl]
        g = tuple(a[sub, None] for a in geom)
        values = _ring_integrands(g, k, sin2, adjoint)
        for slot, f in zip(out, values):
            if slot is not None:
                slot[sub] = f @ basis


def modal_kernels(
    target_r, target_z, source_r, source_z,
    source_nr, source_nz,
    m_max: int,
    k: complex,
    target_nr=None, target_nz=None,
    panel_length=None,
    modes: Optional[Sequence[int]] = None,
) -> KernelTable:
    """
    Modal kernels for many source/target ring pairs at once.

    Pairs whose closest approach exceeds half the source panel length go
    through the trapezoid/FFT route; all others (and every pair when
    panel_length is None) through the graded rule. On-axis pairs are
    evaluated in closed form.

    Args:
        target_r, target_z: Target ring coordinates, shape (P,)
        source_r, source_z: Source ring coordinates, shape (P,)
        source_nr, source_nz: Source normal components, shape (P,)
        m_max: Highest mode returned
        k: Wavenumber with Im(k) >= 0
        target_nr, target_nz: Target normal; enables the adjoint kernel
        panel_length: Source panel length per pair, or None
        modes: Increasing subset of 0..m_max to return (default: all)

    Returns:
        KernelTable with arrays of shape (P, len(modes))

    Raises:
        CoincidentPointError: If a pair has minimal distance below 1e-14
    """
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    if np.imag(k) < 0 or k == 0:
        raise ValueError("wavenumber must be nonzero with non-negative imaginary part")
    modes = np.arange(m_max + 1) if modes is None else np.asarray(modes, dtype=int)
    if modes.size == 0 or modes[0] < 0 or modes[-1] > m_max or np.any(np.diff(modes) <= 0):
        raise ValueError(f"modes must increase within 0..{m_max}")
    r = np.atleast_1d(np.asarray(target_r, dtype=float))
    z = np.atleast_1d(np.asarray(target_z, dtype=float))
    rs = np.atleast_1d(np.asarray(source_r, dtype=float))
    zs = np.atleast_1d(np.asarray(source_z, dtype=float))
    nrs = np.atleast_1d(np.asarray(source_nr, dtype=float))
    nzs = np.atleast_1d(np.asarray(source_nz, dtype=float))
    adjoint = target_nr is not None
    if adjoint:
        nrt = np.atleast_1d(np.asarray(target_nr, dtype=float))
        nzt = np.atleast_1d(np.asarray(target_nz, dtype=float))
    else:
        nrt = nzt = np.zeros_like(r)
    r, z, rs, zs, nrs, nzs, nrt, nzt = np.broadcast_arrays(r, z, rs, zs, nrs, nzs, nrt, nzt)
    if np.any(r < 0) or np.any(rs < 0):
        raise ValueError("ring radii must be non-negative")

    pairs = r.size
    rho_min = np.hypot(r - rs, z - zs)
    if np.any(rho_min < MIN_RHO):
        raise CoincidentPointError("source and target rings coincide")

    shape = (pairs, modes.size)
    single = np.zeros(shape, dtype=complex)
    double = np.zeros(shape, dtype=complex)
    adj = np.zeros(shape, dtype=complex) if adjoint else None
    out = (single, double, adj)
    geom = (r, z, rs, zs, nrs, nzs, nrt, nzt)

    on_axis = (r == 0.0) | (rs == 0.0)
    if np.any(on_axis) and modes[0] == 0:
        idx = np.flatnonzero(on_axis)
        g = tuple(a[idx, None] for a in geom)
        values = _ring_integrands(g, k, np.zeros(1), adjoint)
        for slot, f in zip(out, values):
            if slot is not None:
                slot[idx, 0] = 2.0 * np.pi * f[:, 0]

    if panel_length is None:
        use_fft = np.zeros(pairs, dtype=bool)
    else:
        length = np.broadcast_to(np.asarray(panel_length, dtype=float), r.shape)
        use_fft = rho_min >= FFT_SEPARATION * length
    use_fft &= ~on_axis
    graded = ~use_fft & ~on_axis

    if np.any(use_fft):
        idx = np.flatnonzero(use_fft)
        counts = _trapezoid_count(int(modes[-1]), k, r[idx], rs[idx], rho_min[idx])
        for n in np.unique(counts):
            _fft_route(geom, idx[counts == n], int(n), modes, k, adjoint, out)

    if np.any(graded):
        idx = np.flatnonzero(graded)
        levels = _grading_levels(r[idx], rs[idx], rho_min[idx])
        for lv in np.unique(levels):
            _graded_route(geom, idx[levels == lv], int(lv), modes, k, adjoint, out)

    return KernelTable(single, double, adj)


def _pair_kernels(pair: SourceTargetPair, m_max: int, k: complex, panel_length, modes=None) -> KernelTable:
    return modal_kernels(
        pair.target[0], pair.target[1], pair.source[0], pair.source[1],
        pair.source_normal[0], pair.source_normal[1],
        m_max, k,
        target_nr=pair.target_normal[0], target_nz=pair.target_normal[1],
        panel_length=panel_length,
        modes=modes,
    )


def modal_green(pair: SourceTargetPair, m: int, k: complex) -> ModalKernelPair:
    """
    Modal Green's function of order m and its normal derivatives.

    Evaluated with the graded rule; G_{-m} = G_m by evenness of the
    integrand in theta.

    Args:
        pair: Source and target rings
        m: Azimuthal mode (any sign)
        k: Wavenumber

    Returns:
        ModalKernelPair for mode m

    Raises:
        CoincidentPointError: If the rings touch
    """
    m = abs(int(m))
    table = _pair_kernels(pair, m, k, None, modes=[m])
    return ModalKernelPair(
        complex(table.single[0, 0]), complex(table.double[0, 0]), complex(table.adjoint[0, 0])
    )


def modal_green_batch(pair: SourceTargetPair, m_max: int, k: complex) -> List[ModalKernelPair]:
    """
    All modes 0..m_max of the modal Green's function for one pair.

    Uses the FFT route when the separation ratio is at least 0.5 and the
    graded rule otherwise.
    """
    table = _pair_kernels(pair, m_max, k, pair.panel_length)
    return [
        ModalKernelPair(complex(s), complex(d), complex(a))
        for s, d, a in zip(table.single[0], table.double[0], table.adjoint[0])
    ]
