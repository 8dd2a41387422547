"""
Reference solutions for validating the solvers.

The sphere series and the brute-force ring quadrature are written from the
defining formulas with scipy special functions and quadrature only; they do
not touch the kernel or solver code they are used to check.
"""

import hashlib
import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import eval_legendre, spherical_jn, spherical_yn

from .config import Config
from .curves import AxisFrame, BandLimitedRadialCurve, discretize_on
from .errors import QuadratureError
from .forward import ForwardSolver, forward_operator
from .inversion import JacobianMatrix
from .kernels import ModalKernelPair, SourceTargetPair

logger = logging.getLogger(__name__)

CACHE_VERSION = 1
TAIL_TOLERANCE = 1e-14
SERIES_EXTENSION = 30
MAX_SERIES_DEGREE = 400


def _hankel(l, x):
    return spherical_jn(l, x) + 1j * spherical_yn(l, x)


@dataclass
class SphereSeriesSolution:
    """
    Separation-of-variables solution for a sound-soft sphere.

    u_scat(x) = sum_l c_l h_l(k|x|) P_l(cos angle(x, d)),
    c_l = -(2l + 1) i^l j_l(ka) / h_l(ka)
    """
    k: float
    radius: float
    truncation: int
    coefficients: np.ndarray = field(repr=False)

    @property
    def degrees(self) -> np.ndarray:
        return np.arange(self.truncation + 1)


def sphere_series(k: float, radius: float = 1.0, truncation: Optional[int] = None) -> SphereSeriesSolution:
    """Series coefficients with the default truncation L = ceil(ka) + 30."""
    if k <= 0 or radius <= 0:
        raise ValueError("wavenumber and radius must be positive")
    L = int(math.ceil(k * radius)) + 30 if truncation is None else int(truncation)
    l = np.arange(L + 1)
    ka = k * radius
    coeffs = -(2 * l + 1) * (1j ** l) * spherical_jn(l, ka) / _hankel(l, ka)
    return SphereSeriesSolution(k, radius, L, coeffs)


def _cos_angle(d, points):
    d = np.asarray(d, dtype=float)
    d = d / np.linalg.norm(d)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dist = np.linalg.norm(pts, axis=1)
    return np.clip(pts @ d / dist, -1.0, 1.0), dist


def _series_terms(sol: SphereSeriesSolution, cos_g: np.ndarray, dist: np.ndarray):
    l = sol.degrees
    terms = sol.coefficients[None, :] * _hankel(l[None, :], sol.k * dist[:, None]) \
        * eval_legendre(l[None, :], cos_g[:, None])
    tail = np.abs(terms[:, -1]) / np.maximum(np.max(np.abs(terms), axis=1), 1e-300)
    return terms, float(np.max(tail))


def sphere_scattered_field(sol: SphereSeriesSolution, d: Sequence[float], points: np.ndarray) -> np.ndarray:
    """
    Scattered field of the series at points outside the sphere.

    A series whose last term is still above TAIL_TOLERANCE of the largest
    one is re-summed with SERIES_EXTENSION more degrees until it converges.

    Raises:
        ValueError: If a point lies inside the sphere
        QuadratureError: If the series has not converged by MAX_SERIES_DEGREE
    """
    cos_g, dist = _cos_angle(d, points)
    if np.any(dist < sol.radius * (1.0 - 1e-12)):
        raise ValueError("series evaluation point inside the sphere")
    terms, tail = _series_terms(sol, cos_g, dist)
    while tail > TAIL_TOLERANCE:
        if sol.truncation >= MAX_SERIES_DEGREE:
            raise QuadratureError(
                f"sphere series tail {tail:.2e} above {TAIL_TOLERANCE:.0e} at degree {sol.truncation}"
            )
        degree = min(sol.truncation + SERIES_EXTENSION, MAX_SERIES_DEGREE)
        logger.debug("Sphere series tail %.2e at degree %d, resumming to %d", tail, sol.truncation, degree)
        sol = sphere_series(sol.k, sol.radius, degree)
        terms, tail = _series_terms(sol, cos_g, dist)
    return terms.sum(axis=1)


def sphere_farfield(sol: SphereSeriesSolution, d: Sequence[float], xhat: np.ndarray) -> np.ndarray:
    """Far field sum_l c_l (-i)^{l+1} / k P_l(cos angle(xhat, d))."""
    cos_g, _ = _cos_angle(d, xhat)
    l = sol.degrees
    weights = sol.coefficients * (-1j) ** (l + 1) / sol.k
    return eval_legendre(l[None, :], cos_g[:, None]) @ weights


def sphere_radius_derivative(sol: SphereSeriesSolution, d: Sequence[float], points: np.ndarray) -> np.ndarray:
    """
    Derivative of the scattered field with respect to the sphere radius.

    From the Wronskian j_l h_l' - j_l' h_l = i / x^2:
    dc_l/da = (2l + 1) i^{l+1} / (k a^2 h_l(ka)^2).
    """
    cos_g, dist = _cos_angle(d, points)
    l = sol.degrees
    h_a = _hankel(l, sol.k * sol.radius)
    dc = (2 * l + 1) * (1j ** (l + 1)) / (sol.k * sol.radius ** 2 * h_a ** 2)
    terms = dc[None, :] * _hankel(l[None, :], sol.k * dist[:, None]) * eval_legendre(l[None, :], cos_g[:, None])
    return terms.sum(axis=1)


def _complex_quad(f: Callable[[float], complex], a: float, b: float, tol: float, points=None):
    opts = dict(epsabs=tol, epsrel=tol, limit=1000, points=points)
    re, err_re = quad(lambda x: f(x).real, a, b, **opts)
    im, err_im = quad(lambda x: f(x).imag, a, b, **opts)
    return complex(re, im), max(err_re, err_im)


def modal_green_bruteforce(pair: SourceTargetPair, m: int, k: complex, tol: float = 1e-12) -> ModalKernelPair:
    """
    Adaptive quadrature of the defining ring integrals.

    G_m = int_0^{2 pi} e^{ik rho}/rho e^{-i m theta} d theta with
    rho^2 = r^2 + r'^2 - 2 r r' cos(theta) + (z - z')^2, plus the source- and
    target-normal derivatives.

    Raises:
        QuadratureError: If the error estimate misses the tolerance
    """
    (r, z), (rs, zs) = pair.target, pair.source
    nrs, nzs = pair.source_normal
    nrt, nzt = pair.target_normal

    def rho(th):
        return math.sqrt(max(r * r + rs * rs - 2.0 * r * rs * math.cos(th) + (z - zs) ** 2, 0.0))

    def green(th):
        p = rho(th)
        return np.exp(1j * k * p) / p

    def grad_factor(th):
        p = rho(th)
        return (1j * k * p - 1.0) * np.exp(1j * k * p) / p ** 3

    def single(th):
        return green(th) * np.cos(m * th)

    def double(th):
        nd = nrs * (rs - r * math.cos(th)) + nzs * (zs - z)
        return grad_factor(th) * nd * np.cos(m * th)

    def adjoint(th):
        nd = nrt * (r - rs * math.cos(th)) + nzt * (z - zs)
        return grad_factor(th) * nd * np.cos(m * th)

    values = []
    for f in (single, double, adjoint):
        # Even in theta: integrate [0, pi] and double.
        v, err = _complex_quad(f, 0.0, math.pi, tol, points=[1e-6, 1e-3, 1e-1])
        if err > 10.0 * tol * max(1.0, abs(v)):
            raise QuadratureError(f"ring quadrature error estimate {err:.2e} above tolerance {tol:.0e}")
        values.append(2.0 * v)
    return ModalKernelPair(*values)


def finite_difference_jacobian(
    curve: BandLimitedRadialCurve,
    frame: AxisFrame,
    k: float,
    waves,
    receptors: np.ndarray,
    band_limit: int,
    step: float = 1e-5,
    config: Optional[Config] = None,
):
    """
    Central-difference Jacobian of the forward map over the profile basis.

    Perturbed curves keep the panel layout of the base curve so that the
    differences see only the geometry change.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    base = curve.with_band_limit(band_limit)
    reference = ForwardSolver(base, k, config=config)
    bounds = reference.disc.panel_bounds
    ppw = reference.disc.points_per_wavelength
    columns = []
    for j in range(2 * band_limit + 1):
        e = np.zeros(2 * band_limit + 1)
        e[j] = 1.0
        direction = BandLimitedRadialCurve.from_vector(e, band_limit)
        values = []
        for sign in (1.0, -1.0):
            shifted = base.plus(direction, sign * step)
            solver = ForwardSolver(
                shifted, k, config=config, m_max=reference.m_max,
                disc=discretize_on(shifted, bounds, k, ppw),
            )
            meas = forward_operator(shifted, frame, k, waves, receptors, solver=solver)
            values.append(np.concatenate([meas.block(k, i) for i in range(len(waves))]))
        columns.append((values[0] - values[1]) / (2.0 * step))
    return JacobianMatrix(np.column_stack(columns), k, band_limit)


class OracleCache:
    """
    File cache of oracle results keyed by a content hash of their inputs.

    The directory defaults to oracles.cache_dir and is overridden by the
    AXISCAT_CACHE environment variable.
    """

    def __init__(self, directory: Optional[str] = None, config: Optional[Config] = None):
        if directory is None:
            config = config if config is not None else Config()
            directory = os.environ.get("AXISCAT_CACHE") or config.get("oracles", "cache_dir")
        self.directory = Path(directory).expanduser()

    @staticmethod
    def key(name: str, **inputs) -> str:
        payload = json.dumps(
            {"name": name, "version": CACHE_VERSION, "inputs": _jsonable(inputs)}, sort_keys=True
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.npz"

    def get_or_compute(self, name: str, compute: Callable[[], np.ndarray], **inputs) -> np.ndarray:
        key = self.key(name, **inputs)
        path = self.path(key)
        if path.exists():
            with np.load(path) as data:
                if int(data["version"]) == CACHE_VERSION:
                    return data["values"]
        values = np.asarray(compute())
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, values=values, version=CACHE_VERSION)
        os.replace(tmp, path)
        logger.debug("Cached oracle %s as %s", name, path.name)
        return values


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


def cached_sphere_field(
    k: float,
    radius: float,
    direction: Sequence[float],
    points: np.ndarray,
    cache: Optional[OracleCache] = None,
) -> np.ndarray:
    """Sphere-series field at points, through the oracle cache when one is given."""
    def compute():
        return sphere_scattered_field(sphere_series(k, radius), direction, points)
    if cache is None:
        return compute()
    return cache.get_or_compute(
        "sphere_scattered_field", compute,
        k=k, radius=radius, direction=list(direction), points=np.asarray(points),
    )
