"""
Symmetry-axis detection from far-field patterns.

An obstacle of revolution with axis along z, illuminated from d, scatters a
far field whose modulus is mirror-symmetric about the plane spanned by z and
d. The orientation search rotates the measured far fields to every candidate
pole and keeps the pole with the smallest mirror asymmetry. Once the axis is
aligned, the shift perpendicular to each mirror plane is the one whose
compensating phase e^{ik xhat.s} restores full (complex) mirror symmetry.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.fft import fft, ifft
from scipy.interpolate import RegularGridInterpolator
from scipy.optimize import minimize_scalar

from .config import Config
from .curves import AxisFrame
from .errors import AmbiguousOrientationError, SearchBoundaryError
from .farfield import (
    FarFieldGrid,
    _angles,
    farfield_from_sphere_data,
    angular_grid,
    pole_rotation,
    rotate_farfield,
)
from .forward import MeasurementSet

logger = logging.getLogger(__name__)

FarFields = Union[FarFieldGrid, Sequence[FarFieldGrid]]


@dataclass
class SymmetryReport:
    """
    Outcome of the three-step axis search.

    Attributes:
        estimate: Recovered axis frame
        orientation_score: Relative mirror asymmetry at the chosen pole
        location_scores: Asymmetry of the two centre scans at their minima
        grid_resolution: (d_theta, d_phi, d_h) of the searches
        threshold: Acceptance threshold the scores were held against
    """
    estimate: AxisFrame
    orientation_score: float
    location_scores: Tuple[float, float]
    grid_resolution: Tuple[float, float, float]
    threshold: float = 1e-3

    @property
    def accepted(self) -> bool:
        return self.orientation_score < self.threshold

    @property
    def pole(self) -> Tuple[float, float]:
        return self.estimate.azimuth, self.estimate.polar


def _as_list(ff: FarFields) -> List[FarFieldGrid]:
    return [ff] if isinstance(ff, FarFieldGrid) else list(ff)


def _periodic_rows(ff: FarFieldGrid) -> np.ndarray:
    """Drop the duplicated theta = 2 pi row of a closed azimuth grid."""
    if np.isclose(ff.thetas[-1] - ff.thetas[0], 2.0 * np.pi):
        return ff.values[:-1]
    return ff.values


def mirror_asymmetry(modulus: np.ndarray) -> Tuple[float, int]:
    """
    Smallest mirror mismatch over all mirror angles of an equispaced azimuth grid.

    For rows A_i (i = 0..n-1, theta_i = 2 pi i / n) the mirror about
    theta_0 = pi c / n pairs row i with row c - i (mod n), so

        sum_i |A_i - A_{c-i}|^2 = 2 sum A^2 - 2 (A * A)[c]

    and one circular autoconvolution per column scores every c at once.

    Args:
        modulus: (n, m) real array

    Returns:
        (sum of squared mismatches at the best c, best c)
    """
    spec = fft(modulus, axis=0)
    conv = ifft(spec * spec, axis=0).real.sum(axis=1)
    energy = float(np.sum(modulus * modulus))
    mismatch = np.maximum(2.0 * energy - 2.0 * conv, 0.0)
    c = int(np.argmin(mismatch))
    return float(mismatch[c]), c


class _RotatedSampler:
    """Bilinear resampling of several far fields at once."""

    def __init__(self, ffs: List[FarFieldGrid]):
        first = ffs[0]
        for ff in ffs[1:]:
            if ff.shape != first.shape:
                raise ValueError("far fields must share one grid")
        self.thetas, self.phis = first.thetas, first.phis
        modulus = np.stack([np.abs(ff.values) for ff in ffs], axis=-1)
        self.interp = RegularGridInterpolator((self.thetas, self.phis), modulus, method="linear")
        th, ph = np.meshgrid(self.thetas[:-1], self.phis, indexing="ij")
        self.xhat = np.stack((np.cos(th) * np.sin(ph), np.sin(th) * np.sin(ph), np.cos(ph)), axis=-1)

    def modulus_at_pole(self, pole: Tuple[float, float]) -> np.ndarray:
        world = pole_rotation(pole).apply(self.xhat.reshape(-1, 3))
        theta, phi = _angles(world)
        lo, hi = self.thetas[0], self.thetas[-1]
        theta = lo + np.mod(theta - lo, hi - lo)
        pts = np.stack((theta, np.clip(phi, self.phis[0], self.phis[-1])), axis=1)
        return self.interp(pts).reshape(self.xhat.shape[:2] + (-1,))


def _score_moduli(moduli: np.ndarray) -> float:
    total, energy = 0.0, 0.0
    for f in range(moduli.shape[-1]):
        a = moduli[..., f]
        mismatch, _ = mirror_asymmetry(a)
        total += mismatch
        energy += float(np.sum(a * a))
    return math.sqrt(total / energy) if energy > 0 else 0.0


def symmetry_score(ff: FarFields, pole: Tuple[float, float]) -> float:
    """
    Relative mirror asymmetry of |u_inf| after rotating `pole` to +z.

    The mirror angle is scanned over the half-grid of azimuths; several far
    fields each get their own mirror angle and their mismatches are summed.

    Args:
        ff: One far field or several on a common grid
        pole: Candidate axis as (azimuth, polar)

    Returns:
        RMS of |u_inf(theta_0 + s)| - |u_inf(theta_0 - s)| over the RMS of |u_inf|
    """
    ffs = _as_list(ff)
    return _score_moduli(_RotatedSampler(ffs).modulus_at_pole(pole))


def pole_grid(n_theta: int, n_phi: int) -> List[Tuple[float, float]]:
    """
    Candidate poles (azimuth, polar) on the upper hemisphere.

    Axes are unsigned, so polar angles stop at pi/2; the pole itself is
    listed once.
    """
    poles = [(0.0, 0.0)]
    for j in range(1, n_phi // 2 + 1):
        for i in range(n_theta):
            poles.append((2.0 * np.pi * i / n_theta, np.pi * j / n_phi))
    return poles


def _axis_angle(p: Tuple[float, float], q: Tuple[float, float]) -> float:
    a = pole_rotation(p).apply([0.0, 0.0, 1.0])
    b = pole_rotation(q).apply([0.0, 0.0, 1.0])
    return float(np.arccos(min(1.0, abs(float(np.dot(a, b))))))


def find_orientation(
    ff: FarFields,
    n_theta: int = 100,
    n_phi: int = 100,
    threads: int = 1,
    ambiguity: float = 0.1,
    floor: float = 1e-3,
) -> Tuple[float, float, float]:
    """
    Exhaustive search for the pole of smallest mirror asymmetry.

    Args:
        ff: One far field or several on a common grid
        n_theta: Azimuth intervals of the pole grid
        n_phi: Polar intervals of the pole grid over [0, pi]
        threads: Worker threads for scoring
        ambiguity: Relative score gap below which two separated poles tie
        floor: Scores below this count as equally symmetric

    Returns:
        (azimuth, polar, score) of the best pole

    Raises:
        ValueError: If the grid is coarser than 8 x 8
        AmbiguousOrientationError: If a pole more than two grid cells away
            scores within `ambiguity` of the best
    """
    if n_theta < 8 or n_phi < 8:
        raise ValueError("pole grid needs at least 8 intervals per angle")
    sampler = _RotatedSampler(_as_list(ff))
    poles = pole_grid(n_theta, n_phi)

    def score(pole):
        return _score_moduli(sampler.modulus_at_pole(pole))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            scores = np.array(list(pool.map(score, poles)))
    else:
        scores = np.array([score(p) for p in poles])

    order = np.argsort(scores, kind="stable")
    best = poles[order[0]]
    best_score = float(scores[order[0]])
    separation = 2.0 * max(2.0 * np.pi / n_theta, np.pi / n_phi)
    for idx in order[1:]:
        if _axis_angle(best, poles[idx]) > separation:
            runner = poles[idx]
            runner_score = float(scores[idx])
            gap = (runner_score - best_score) / max(runner_score, floor)
            if gap < ambiguity:
                raise AmbiguousOrientationError(
                    f"poles {best} and {runner} score {best_score:.3e} and {runner_score:.3e}",
                    best=(best[0], best[1], best_score),
                    runner_up=(runner[0], runner[1], runner_score),
                )
            break
    logger.info(
        "Orientation: azimuth %.4f pi, polar %.4f pi, score %.3e",
        best[0] / np.pi, best[1] / np.pi, best_score,
    )
    return best[0], best[1], best_score


def _mirror_frame(ff: FarFieldGrid, pole: Tuple[float, float], reference: np.ndarray):
    """
    Rotate ff so the pole is +z and its mirror plane is the y-z plane.

    The spin is chosen with the new x axis pointing along +reference in the
    world frame, so that the scanned shift is the world component along it
    for an upright axis.
    """
    d = pole_rotation(pole).inv().apply(np.asarray(ff.direction))
    theta0 = math.atan2(d[1], d[0])
    spin = theta0 + 0.5 * np.pi
    x_world = pole_rotation(pole, spin).apply([1.0, 0.0, 0.0])
    if np.dot(x_world, reference) < 0:
        spin -= np.pi
        x_world = -x_world
    return rotate_farfield(ff, pole, spin), x_world


def mirror_score(ff: FarFieldGrid, shift: float) -> float:
    """Complex mismatch of the x-shift-compensated far field across the y-z plane."""
    values = _periodic_rows(ff)
    n = values.shape[0]
    theta = ff.thetas[:n]
    sin_p = np.sin(ff.phis)
    v = values * np.exp(1j * ff.k * np.outer(np.cos(theta), sin_p) * shift)
    mirror = v[(n // 2 - np.arange(n)) % n]
    norm = np.linalg.norm(v)
    return float(np.linalg.norm(v - mirror) / norm) if norm > 0 else 0.0


def scan_shift(
    ff: FarFieldGrid,
    search_range: Tuple[float, float],
    points: int = 200,
    tol: float = 1e-3,
) -> Tuple[float, float]:
    """
    Shift along the frame x axis that restores mirror symmetry about y-z.

    Coarse grid, then bounded golden-section/parabolic refinement.

    Returns:
        (shift, score)

    Raises:
        SearchBoundaryError: If the coarse minimum sits on a range endpoint
    """
    lo, hi = search_range
    if not hi > lo:
        raise ValueError("search range must be increasing")
    if (ff.thetas.size - 1) % 2:
        raise ValueError("mirror scan needs an even number of azimuth intervals")
    grid = np.linspace(lo, hi, points)
    scores = np.array([mirror_score(ff, s) for s in grid])
    i = int(np.argmin(scores))
    if i == 0 or i == points - 1:
        raise SearchBoundaryError(
            f"centre scan minimum at range endpoint {grid[i]:.4g} of [{lo:g}, {hi:g}]"
        )
    step = grid[1] - grid[0]
    res = minimize_scalar(
        lambda s: mirror_score(ff, s),
        bounds=(grid[i] - step, grid[i] + step),
        method="bounded",
        options={"xatol": tol},
    )
    best = float(res.x) if res.fun <= scores[i] else float(grid[i])
    return best, float(min(res.fun, scores[i]))


def find_center(
    ff_x: FarFieldGrid,
    ff_y: FarFieldGrid,
    k: float,
    x_range: Tuple[float, float],
    y_range: Tuple[float, float],
    pole: Tuple[float, float] = (0.0, 0.0),
    points: int = 200,
    tol: float = 1e-3,
) -> Tuple[float, float, Tuple[float, float]]:
    """
    Locate the axis in the plane z = 0.

    With the axis along z, the field of e^{iky} determines h1 and the field
    of e^{ikx} determines h2. For a tilted axis both far fields are first
    rotated to the aligned frame; each fixes the centre component
    perpendicular to its mirror plane, and the two components are solved
    for the crossing of the axis with z = 0.

    Args:
        ff_x, ff_y: World-frame far fields of the two probing waves
        k: Wavenumber
        x_range, y_range: Search intervals for h1 and h2
        pole: Axis as (azimuth, polar)
        points: Coarse grid size
        tol: Refinement tolerance

    Returns:
        (h1, h2, (score_h1, score_h2))
    """
    for ff in (ff_x, ff_y):
        if not math.isclose(ff.k, k, rel_tol=1e-9):
            raise ValueError("far field wavenumber does not match k")
    aligned_y, axis_y = _mirror_frame(ff_y, pole, np.array([1.0, 0.0, 0.0]))
    aligned_x, axis_x = _mirror_frame(ff_x, pole, np.array([0.0, 1.0, 0.0]))
    s1, score1 = scan_shift(aligned_y, x_range, points, tol)
    s2, score2 = scan_shift(aligned_x, y_range, points, tol)
    system = np.array([axis_y[:2], axis_x[:2]])
    if abs(np.linalg.det(system)) < 1e-8:
        raise ValueError("probing waves do not separate the two centre components")
    h1, h2 = np.linalg.solve(system, [s1, s2])
    logger.info("Centre: h1=%.4f (score %.3e), h2=%.4f (score %.3e)", h1, score1, h2, score2)
    return float(h1), float(h2), (score1, score2)


def find_axis(
    meas: MeasurementSet,
    k: float,
    config: Optional[Config] = None,
    generic_index: int = 0,
    x_index: int = 1,
    y_index: int = 2,
    noise: float = 0.0,
    threads: int = 1,
) -> SymmetryReport:
    """
    Orientation and centre of the symmetry axis from sphere measurements.

    Args:
        meas: Sphere-grid measurements with blocks for a generic wave and
            the two probing waves e^{ikx} and e^{iky}
        k: Wavenumber of the blocks
        config: Settings of the farfield and axis sections
        generic_index, x_index, y_index: Direction indices of the three waves
        noise: Noise level of the data; when positive, five times it replaces
            both the harmonic fit tolerance and the acceptance threshold
        threads: Worker threads for the pole search

    Returns:
        SymmetryReport
    """
    config = config if config is not None else Config()
    ffc = config.get_section("farfield")
    axc = config.get_section("axis")
    grid = angular_grid(ffc["n_theta"], ffc["n_phi"])
    tol = 5.0 * noise if noise > 0 else ffc["fit_tolerance"]
    threshold = 5.0 * noise if noise > 0 else axc["accept_threshold"]
    ffs = [
        farfield_from_sphere_data(meas, k, i, grid, margin=ffc["degree_margin"], fit_tolerance=tol)
        for i in (generic_index, x_index, y_index)
    ]
    azimuth, polar, score = find_orientation(
        ffs, axc["pole_n_theta"], axc["pole_n_phi"], threads=threads,
        ambiguity=axc["ambiguity"], floor=threshold,
    )
    h1, h2, loc_scores = find_center(
        ffs[1], ffs[2], k,
        tuple(axc["x_range"]), tuple(axc["y_range"]),
        pole=(azimuth, polar),
        points=axc["center_points"],
        tol=axc["center_tolerance"],
    )
    report = SymmetryReport(
        estimate=AxisFrame(polar=polar, azimuth=azimuth, center_xy=(h1, h2)),
        orientation_score=score,
        location_scores=loc_scores,
        grid_resolution=(
            2.0 * np.pi / axc["pole_n_theta"],
            np.pi / axc["pole_n_phi"],
            axc["center_tolerance"],
        ),
        threshold=threshold,
    )
    if not report.accepted:
        logger.warning(
            "Orientation score %.3e exceeds acceptance threshold %.1e",
            score, report.threshold,
        )
    return report
