"""
Far-field patterns, their rigid-motion transforms and sphere-data extraction.

Convention: u_scat(R xhat) ~ e^{ikR}/R u_inf(xhat), so the monopole
e^{ikR}/R has far field 1. Grid angles are (theta, phi) with theta the
azimuth in [0, 2 pi] and phi the polar angle in [0, pi].
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence, Tuple

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial.transform import Rotation
from scipy.special import jv, jvp, roots_legendre

from .curves import AxisFrame, DiscretizedCurve, direction_to_axis_frame
from .errors import FitResidualError, SphereGridError
from .forward import ForwardSolver, IncidentWave, MeasurementSet, ModalDensitySet
from .kernels import spherical_wave_functions

try:
    from scipy.special import sph_harm_y
except ImportError:  # scipy < 1.15
    from scipy.special import sph_harm

    def sph_harm_y(l, m, polar, azimuth):
        return sph_harm(m, l, azimuth, polar)

logger = logging.getLogger(__name__)

CONVENTION = "green-4pi"


@dataclass
class FarFieldGrid:
    """
    Far field sampled on a tensor grid.

    Attributes:
        thetas: Azimuths, strictly increasing from 0 to 2 pi
        phis: Polar angles, strictly increasing from 0 to pi
        values: Complex (len(thetas), len(phis)) matrix u_inf(theta_i, phi_j)
        k: Wavenumber
        direction: Incident direction d that generated the field
    """
    thetas: np.ndarray
    phis: np.ndarray
    values: np.ndarray = field(repr=False)
    k: float
    direction: Tuple[float, float, float]

    def __post_init__(self):
        self.thetas = np.asarray(self.thetas, dtype=float)
        self.phis = np.asarray(self.phis, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        self.direction = tuple(float(c) for c in self.direction)
        if np.any(np.diff(self.thetas) <= 0) or np.any(np.diff(self.phis) <= 0):
            raise ValueError("far-field grid must be strictly increasing")
        if self.values.shape != (self.thetas.size, self.phis.size):
            raise ValueError(
                f"values have shape {self.values.shape}, grid is "
                f"{self.thetas.size}x{self.phis.size}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("far-field values must be finite")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def unit_vectors(self) -> np.ndarray:
        return unit_vectors(self.thetas, self.phis)

    def with_values(self, values: np.ndarray) -> "FarFieldGrid":
        return replace(self, values=values)


def angular_grid(n_theta: int = 100, n_phi: int = 100) -> Tuple[np.ndarray, np.ndarray]:
    """Equispaced grid with n_theta + 1 azimuths and n_phi + 1 polar angles."""
    if n_theta < 1 or n_phi < 1:
        raise ValueError("grid needs at least one interval per angle")
    return np.linspace(0.0, 2.0 * np.pi, n_theta + 1), np.linspace(0.0, np.pi, n_phi + 1)


def unit_vectors(thetas: np.ndarray, phis: np.ndarray) -> np.ndarray:
    """Directions (len(thetas), len(phis), 3) of the grid angles."""
    th, ph = np.meshgrid(thetas, phis, indexing="ij")
    return np.stack((np.cos(th) * np.sin(ph), np.sin(th) * np.sin(ph), np.cos(ph)), axis=-1)


def _angles(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.mod(np.arctan2(vectors[..., 1], vectors[..., 0]), 2.0 * np.pi)
    phi = np.arccos(np.clip(vectors[..., 2], -1.0, 1.0))
    return theta, phi


def farfield_at(
    densities: Sequence[ModalDensitySet],
    disc: DiscretizedCurve,
    k: float,
    directions: np.ndarray,
) -> np.ndarray:
    """
    Far field of solved densities in the given observation directions.

    u_inf(xhat) = 1/(4 pi) int (d_nu + ik) e^{-ik xhat.y} mu(y) ds(y), with the
    azimuthal integral of the plane-wave factor done by Jacobi-Anger:
    f_m(r', z') = 2 pi (-i)^m J_m(k r' sin phi) e^{-ik z' cos phi}.

    Args:
        densities: Solved density sets (all on `disc`)
        disc: Discretization
        k: Wavenumber
        directions: (..., 3) unit vectors in the axis frame

    Returns:
        Complex array (waves,) + directions.shape[:-1]
    """
    directions = np.asarray(directions, dtype=float)
    lead = directions.shape[:-1]
    theta, phi = _angles(directions.reshape(-1, 3))
    m_max = densities[0].mode_count
    m = np.arange(m_max + 1)

    sin_p, cos_p = np.sin(phi), np.cos(phi)
    arg = k * np.multiply.outer(sin_p, disc.r)  # (P, N)
    axial = np.exp(-1j * k * np.multiply.outer(cos_p, disc.z))
    w = disc.arclength_weights * disc.r / (4.0 * np.pi)
    out = np.zeros((len(densities), theta.size), dtype=complex)
    mu = np.stack([d.densities for d in densities])  # (W, M+1, N)

    for mm in m:
        scale = 2.0 * np.pi * (-1j) ** mm
        j = jv(mm, arg)
        dj = jvp(mm, arg)
        f = scale * j * axial
        df = scale * axial * (
            disc.nr[None, :] * k * sin_p[:, None] * dj
            - 1j * k * cos_p[:, None] * disc.nz[None, :] * j
        )
        kernel = (df + 1j * k * f) * w[None, :]
        moment = mu[:, mm, :] @ kernel.T  # (W, P)
        if mm == 0:
            out += moment
        else:
            phase = np.exp(1j * mm * theta)[None, :]
            mirror = np.array([np.exp(2j * mm * d.wave.azimuth) for d in densities])[:, None]
            out += moment * (phase + mirror * np.conj(phase))
    return out.reshape((len(densities),) + lead)


def farfield_from_density(
    densities: ModalDensitySet,
    disc: DiscretizedCurve,
    k: float,
    grid: Tuple[np.ndarray, np.ndarray],
) -> FarFieldGrid:
    """
    Far field of one solved wave on an angular grid of the axis frame.

    Args:
        densities: Solved densities
        disc: Discretization
        k: Wavenumber
        grid: (thetas, phis)

    Returns:
        FarFieldGrid
    """
    thetas, phis = grid
    values = farfield_at([densities], disc, k, unit_vectors(thetas, phis))[0]
    return FarFieldGrid(thetas, phis, values, k, densities.wave.direction)


def obstacle_farfield(
    solver: ForwardSolver,
    frame: AxisFrame,
    direction: Sequence[float],
    grid: Tuple[np.ndarray, np.ndarray],
) -> FarFieldGrid:
    """
    World-frame far field of the obstacle placed by `frame`.

    Combines the axis-frame solve with the rigid motion: directions are
    rotated into the axis frame and the shift contributes e^{ik(d - xhat).c}.
    """
    k = solver.k
    d = np.asarray(direction, dtype=float)
    local = IncidentWave.towards(k, direction_to_axis_frame(d, frame))
    dens = solver.solve([local])
    thetas, phis = grid
    xhat = unit_vectors(thetas, phis)
    rot = frame.rotation
    local_dirs = rot.inv().apply(xhat.reshape(-1, 3)).reshape(xhat.shape)
    values = farfield_at(dens, solver.disc, k, local_dirs)[0]
    values = values * np.exp(1j * k * ((d[None, None, :] - xhat) @ frame.center))
    return FarFieldGrid(thetas, phis, values, k, tuple(d))


def translate_farfield(ff: FarFieldGrid, h: Sequence[float]) -> FarFieldGrid:
    """
    Far field of the obstacle shifted by h.

    u_h(xhat) = e^{ik(d - xhat).h} u(xhat)
    """
    h = np.asarray(h, dtype=float)
    if h.shape != (3,):
        raise ValueError("shift must be a 3-vector")
    xhat = ff.unit_vectors()
    phase = np.exp(1j * ff.k * ((np.asarray(ff.direction)[None, None, :] - xhat) @ h))
    return ff.with_values(ff.values * phase)


def pole_rotation(pole: Tuple[float, float], spin: float = 0.0) -> Rotation:
    """
    Rotation taking +z to the direction with azimuth pole[0] and polar angle
    pole[1], preceded by a turn of `spin` about +z.
    """
    return Rotation.from_euler("ZYZ", [pole[0], pole[1], spin])


def _interpolator(ff: FarFieldGrid):
    re = RegularGridInterpolator((ff.thetas, ff.phis), ff.values.real, method="linear")
    im = RegularGridInterpolator((ff.thetas, ff.phis), ff.values.imag, method="linear")

    def sample(theta, phi):
        lo, hi = ff.thetas[0], ff.thetas[-1]
        theta = lo + np.mod(theta - lo, hi - lo)
        pts = np.stack((theta.reshape(-1), np.clip(phi, ff.phis[0], ff.phis[-1]).reshape(-1)), axis=1)
        return (re(pts) + 1j * im(pts)).reshape(np.shape(theta))

    return sample


def rotate_farfield(ff: FarFieldGrid, new_pole: Tuple[float, float], spin: float = 0.0) -> FarFieldGrid:
    """
    Resample a far field in the frame whose +z axis is new_pole.

    new_pole is (azimuth, polar) in the current frame. Values come from
    bilinear interpolation with periodic wrap in the azimuth; the incident
    direction is expressed in the new frame as well. A nonzero spin also
    turns the new frame about its own z axis.
    """
    rot = pole_rotation(new_pole, spin)
    xhat = ff.unit_vectors()
    world = rot.apply(xhat.reshape(-1, 3)).reshape(xhat.shape)
    theta, phi = _angles(world)
    values = _interpolator(ff)(theta, phi)
    direction = rot.inv().apply(np.asarray(ff.direction))
    return FarFieldGrid(ff.thetas, ff.phis, values, ff.k, tuple(direction))


@dataclass(frozen=True)
class SphereGrid:
    """
    Gauss-Legendre x equispaced receptor grid on a sphere about the origin.

    Receptors are ordered polar-major: index = j * n_theta + i.
    """
    radius: float
    n_theta: int
    n_phi: int

    @property
    def cos_phis(self) -> np.ndarray:
        return np.sort(roots_legendre(self.n_phi)[0])[::-1]

    @property
    def phis(self) -> np.ndarray:
        return np.arccos(self.cos_phis)

    @property
    def phi_weights(self) -> np.ndarray:
        x, w = roots_legendre(self.n_phi)
        return w[np.argsort(x)[::-1]]

    @property
    def thetas(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @property
    def max_degree(self) -> int:
        return min(self.n_phi - 1, (self.n_theta - 1) // 2)

    def points(self) -> np.ndarray:
        ph, th = np.meshgrid(self.phis, self.thetas, indexing="ij")
        pts = np.stack((np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)), axis=-1)
        return self.radius * pts.reshape(-1, 3)


def sphere_grid(radius: float, k: float, margin: int = 12) -> SphereGrid:
    """Receptor grid that resolves harmonics up to degree ceil(k R) + margin."""
    if radius <= 0:
        raise ValueError("sphere radius must be positive")
    degree = int(math.ceil(k * radius)) + margin
    return SphereGrid(radius, 2 * degree + 2, degree + 1)


def detect_sphere_grid(receptors: np.ndarray, rtol: float = 1e-8) -> SphereGrid:
    """
    Recognize a SphereGrid from receptor positions.

    Raises:
        SphereGridError: If the receptors are not such a grid in the expected order
    """
    pts = np.atleast_2d(np.asarray(receptors, dtype=float))
    radii = np.linalg.norm(pts, axis=1)
    radius = float(np.mean(radii))
    if radius <= 0 or np.max(np.abs(radii - radius)) > rtol * radius:
        raise SphereGridError("receptors do not lie on one sphere about the origin")
    cos_p = np.round(pts[:, 2] / radius, 9)
    n_phi = np.unique(cos_p).size
    if n_phi == 0 or pts.shape[0] % n_phi:
        raise SphereGridError("receptor count is not a multiple of the polar ring count")
    candidate = SphereGrid(radius, pts.shape[0] // n_phi, n_phi)
    if candidate.n_theta < 3 or np.max(np.abs(candidate.points() - pts)) > 1e-6 * radius:
        raise SphereGridError(
            f"receptors are not a Gauss-Legendre x equispaced grid ({n_phi} polar rings)"
        )
    return candidate


def _harmonic_matrix(degree: int, polar: np.ndarray, azimuth: np.ndarray):
    ls, ms = [], []
    for l in range(degree + 1):
        for m in range(-l, l + 1):
            ls.append(l)
            ms.append(m)
    ls, ms = np.array(ls), np.array(ms)
    Y = sph_harm_y(ls[None, :], ms[None, :], polar.reshape(-1)[:, None], azimuth.reshape(-1)[:, None])
    return np.asarray(Y), ls


def farfield_from_sphere_data(
    meas: MeasurementSet,
    k: float,
    direction_index: int,
    grid: Tuple[np.ndarray, np.ndarray],
    margin: int = 12,
    fit_tolerance: float = 1e-6,
) -> FarFieldGrid:
    """
    Far field from scattered-field samples on a sphere containing the obstacle.

    The exterior field is expanded as sum c_lm h_l(k r) Y_lm; coefficients
    follow from Gauss quadrature on the receptor grid, and
    u_inf = sum c_lm (-i)^{l+1} / k Y_lm.

    Args:
        meas: Measurements on a SphereGrid
        k: Wavenumber of the block
        direction_index: Incident direction of the block
        grid: (thetas, phis) of the output
        margin: Harmonic degree beyond k R_B
        fit_tolerance: Largest accepted relative fit residual

    Returns:
        FarFieldGrid

    Raises:
        SphereGridError: If the receptors are not a recognized sphere grid
        FitResidualError: If the degree-L fit misses more than fit_tolerance of the data
    """
    sg = detect_sphere_grid(meas.receptors)
    data = meas.block(k, direction_index)
    degree = min(int(math.ceil(k * sg.radius)) + margin, sg.max_degree)
    if degree < int(math.ceil(k * sg.radius)):
        logger.warning(
            "Sphere grid resolves degree %d only, below k R_B = %.2f", degree, k * sg.radius
        )
    ph, th = np.meshgrid(sg.phis, sg.thetas, indexing="ij")
    Y, ls = _harmonic_matrix(degree, ph, th)
    weights = np.repeat(sg.phi_weights, sg.n_theta) * (2.0 * np.pi / sg.n_theta)
    coeffs = Y.conj().T @ (weights * data)

    fit = Y @ coeffs
    norm = np.linalg.norm(data)
    residual = float(np.linalg.norm(fit - data) / norm) if norm > 0 else 0.0
    logger.debug("Sphere fit to degree %d: relative residual %.3e", degree, residual)
    if residual > fit_tolerance:
        raise FitResidualError(
            f"harmonic fit residual {residual:.3e} exceeds {fit_tolerance:.1e} "
            f"(degree {degree}, R_B={sg.radius:g}, k={k:g})"
        )

    hankel = np.array([spherical_wave_functions(l, k * sg.radius)[1] for l in range(degree + 1)])
    far_coeffs = coeffs / hankel[ls] * (-1j) ** (ls + 1) / k
    thetas, phis = grid
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    Yout, _ = _harmonic_matrix(degree, pp, tt)
    values = (Yout @ far_coeffs).reshape(tt.shape)
    return FarFieldGrid(thetas, phis, values, k, meas.directions[direction_index])
