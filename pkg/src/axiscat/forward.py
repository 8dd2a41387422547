"""
Modal Nystrom solver for sound-soft scattering by bodies of revolution.

The scattered field is written as a combined layer potential

    u_scat = (D + ik S) mu

with the kernel e^{ik|x-y|} / (4 pi |x-y|). Expanding density and incident
wave in azimuthal Fourier modes decouples the boundary integral equation
into one line integral equation per mode m,

    (1/2 I + D_m + ik S_m) mu_m = -u_m^inc,

discretized with 16-node Gauss-Legendre panels on the generating curve.
Source panels close to a target are integrated with a rule graded toward
the closest point and the density is carried there by Lagrange
interpolation on the panel nodes. One LU factorization per mode serves
every incident direction. The adjoint system

    (1/2 I + K'_m + ik S_m) v_m = d_nu u_m^inc + ik u_m^inc

yields the normal derivative v of the total field on the boundary, which
the shape derivative needs.

Only modes m >= 0 are solved; kernels are even in m and the incident modes
obey u_{-m}^inc = e^{2 i m phi_d} u_m^inc, so mu_{-m} = e^{2 i m phi_d} mu_m.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import BarycentricInterpolator
from scipy.linalg import lu_factor, lu_solve
from scipy.special import jv, jvp, roots_legendre

from .config import Config
from .curves import (
    GAUSS_ORDER,
    AxisFrame,
    BandLimitedRadialCurve,
    DiscretizedCurve,
    build_panels,
    curve_frame,
    direction_to_axis_frame,
    world_to_axis_frame,
)
from .errors import NearSurfaceError, ShapeMismatchError
from .kernels import bessel_j, modal_kernels

logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * np.pi
_GL_X, _GL_W = roots_legendre(GAUSS_ORDER)
_GRADING_RATIO = 0.2
_SELF_LEVELS = 6
_TARGET_BLOCK = 16


@dataclass(frozen=True)
class IncidentWave:
    """Plane wave e^{ik x.d}."""
    k: float
    direction: Tuple[float, float, float]

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,):
            raise ValueError("direction must be a 3-vector")
        if not self.k > 0:
            raise ValueError("wavenumber must be positive")
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ValueError(f"direction must be a unit vector, |d| = {np.linalg.norm(d)}")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))
        object.__setattr__(self, "k", float(self.k))

    @classmethod
    def towards(cls, k: float, direction: Sequence[float]) -> "IncidentWave":
        """Build a wave from a direction that need not be normalized."""
        d = np.asarray(direction, dtype=float)
        return cls(k, tuple(d / np.linalg.norm(d)))

    @property
    def azimuth(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])

    @property
    def transverse(self) -> float:
        return math.hypot(self.direction[0], self.direction[1])

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.exp(1j * self.k * np.asarray(points, dtype=float) @ np.asarray(self.direction))


def _incident_tables(wave: IncidentWave, r, z, nr, nz, m_max: int, k=None):
    """Incident modes m = 0..m_max and their normal derivatives on (r, z)."""
    k = wave.k if k is None else k
    s = wave.transverse
    d3 = wave.direction[2]
    m = np.arange(m_max + 1)[:, None]
    phase = (1j ** m) * np.exp(-1j * m * wave.azimuth) * np.exp(1j * k * d3 * z)[None, :]
    arg = k * s * np.asarray(r)[None, :]
    values = phase * jv(m, arg)
    du_dr = phase * k * s * jvp(m, arg)
    du_dn = np.asarray(nr)[None, :] * du_dr + np.asarray(nz)[None, :] * (1j * k * d3) * values
    return values, du_dn


def incident_modes(wave: IncidentWave, nodes: DiscretizedCurve, m_max: int) -> np.ndarray:
    """
    Azimuthal modes of a plane wave on the discretization nodes.

    u_m^inc(r, z) = i^m J_m(k r sqrt(d1^2 + d2^2)) e^{-i m phi_d} e^{i k d3 z}

    Args:
        wave: Incident plane wave
        nodes: Discretized generating curve
        m_max: Highest mode

    Returns:
        Complex array (2 * m_max + 1, N); row m + m_max holds mode m
    """
    if m_max < 0:
        raise ValueError("m_max must be non-negative")
    modes = np.arange(-m_max, m_max + 1)[:, None]
    s = wave.transverse
    phase = (1j ** modes) * np.exp(-1j * modes * wave.azimuth)
    jm = np.array([bessel_j(int(m), wave.k * s * nodes.r) for m in modes[:, 0]])
    return phase * jm * np.exp(1j * wave.k * wave.direction[2] * nodes.z)[None, :]


def mode_truncation(k: float, disc: DiscretizedCurve, tol: float = 1e-12) -> int:
    """
    Number of azimuthal modes needed to resolve the field.

    Smallest M beyond k r_max with |J_M(k r_max)| < tol, clamped below at 4.
    """
    if not 0.0 < tol < 1.0:
        raise ValueError("tolerance must lie in (0, 1)")
    x = abs(k) * float(np.max(disc.r))
    m = int(math.ceil(x))
    while abs(bessel_j(m, x)) >= tol:
        m += 1
    return max(m, 4)


@dataclass
class ModalLinearSystem:
    """Dense Nystrom matrix of one azimuthal mode and its LU factorization."""
    mode: int
    matrix: np.ndarray = field(repr=False)
    lu: Tuple[np.ndarray, np.ndarray] = field(repr=False, default=None)

    def __post_init__(self):
        if self.lu is None:
            self.lu = lu_factor(self.matrix)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return lu_solve(self.lu, rhs)

    def relative_residual(self, solution: np.ndarray, rhs: np.ndarray) -> float:
        denom = np.linalg.norm(rhs)
        return float(np.linalg.norm(self.matrix @ solution - rhs) / denom) if denom > 0 else 0.0


@dataclass
class ModalDensitySet:
    """
    Solved densities of one incident wave.

    Attributes:
        wave: Incident wave in the axis frame
        densities: (m_max + 1, N) array of mu_m for m >= 0
        normal_derivative: Optional (m_max + 1, N) modes of d_nu u on the boundary
    """
    wave: IncidentWave
    densities: np.ndarray = field(repr=False)
    normal_derivative: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def mode_count(self) -> int:
        return self.densities.shape[0] - 1

    @property
    def logical_modes(self) -> int:
        return 2 * self.mode_count + 1

    def mode(self, m: int) -> np.ndarray:
        """Density of mode m of either sign."""
        if abs(m) > self.mode_count:
            raise IndexError(f"mode {m} outside 0..{self.mode_count}")
        if m >= 0:
            return self.densities[m]
        return np.exp(-2j * m * self.wave.azimuth) * self.densities[-m]

    def azimuthal_weights(self, theta: np.ndarray) -> np.ndarray:
        """Factors c_m(theta) so that sum_{|m|<=M} f_m e^{i m theta} = sum_{m>=0} c_m f_m."""
        m = np.arange(self.mode_count + 1)
        theta = np.asarray(theta, dtype=float)
        c = np.exp(1j * np.multiply.outer(theta, m))
        c[..., 1:] += np.exp(2j * m[1:] * self.wave.azimuth) * np.exp(-1j * np.multiply.outer(theta, m[1:]))
        return c


@dataclass
class MeasurementSet:
    """
    Scattered-field samples at receptors.

    Attributes:
        receptors: (M, 3) receptor positions
        directions: Incident directions, indexed by position
        entries: Map (k, direction index) -> complex vector of length M
        noise_meta: Optional (level, seed)
    """
    receptors: np.ndarray
    directions: List[Tuple[float, float, float]]
    entries: Dict[Tuple[float, int], np.ndarray] = field(default_factory=dict)
    noise_meta: Optional[Tuple[float, int]] = None

    def __post_init__(self):
        self.receptors = np.atleast_2d(np.asarray(self.receptors, dtype=float))
        if self.receptors.shape[1] != 3:
            raise ShapeMismatchError("receptors must be an (M, 3) array")
        self.directions = [tuple(float(c) for c in d) for d in self.directions]
        for key, values in self.entries.items():
            self._check(key, values)

    def _check(self, key, values):
        if np.shape(values) != (self.receptor_count,):
            raise ShapeMismatchError(
                f"entry {key} has length {np.size(values)}, expected {self.receptor_count}"
            )
        if not 0 <= key[1] < len(self.directions):
            raise ShapeMismatchError(f"entry {key} references an unknown direction")

    @property
    def receptor_count(self) -> int:
        return self.receptors.shape[0]

    @property
    def wavenumbers(self) -> List[float]:
        return sorted({k for k, _ in self.entries})

    def add(self, k: float, direction_index: int, values: np.ndarray) -> None:
        key = (float(k), int(direction_index))
        values = np.asarray(values, dtype=complex)
        self._check(key, values)
        self.entries[key] = values

    def block(self, k: float, direction_index: int) -> np.ndarray:
        return self.entries[(float(k), int(direction_index))]

    def waves_at(self, k: float) -> List[IncidentWave]:
        idx = sorted(i for kk, i in self.entries if kk == float(k))
        return [IncidentWave(k, self.directions[i]) for i in idx]

    def stacked(self, k: float) -> np.ndarray:
        """All blocks at wavenumber k, concatenated in direction order."""
        idx = sorted(i for kk, i in self.entries if kk == float(k))
        if not idx:
            raise KeyError(f"no measurements at k={k}")
        return np.concatenate([self.entries[(float(k), i)] for i in idx])

    def subset(self, wavenumbers: Sequence[float]) -> "MeasurementSet":
        keep = {float(k) for k in wavenumbers}
        entries = {key: v for key, v in self.entries.items() if key[0] in keep}
        return MeasurementSet(self.receptors, self.directions, entries, self.noise_meta)


def _side_rule(levels: int, power: int = 2) -> Tuple[np.ndarray, np.ndarray]:
    """
    Graded rule on (0, 1] concentrated at 0.

    Breakpoints ratio^levels, ..., ratio, 1; the innermost interval uses the
    substitution s = h v^power against the logarithmic endpoint singularity.
    """
    v = 0.5 * (_GL_X + 1.0)
    wv = 0.5 * _GL_W
    h0 = _GRADING_RATIO ** levels
    nodes = [h0 * v ** power]
    weights = [h0 * power * v ** (power - 1) * wv]
    breaks = [_GRADING_RATIO ** l for l in range(levels, -1, -1)]
    for a, b in zip(breaks[:-1], breaks[1:]):
        nodes.append(a + (b - a) * v)
        weights.append((b - a) * wv)
    return np.concatenate(nodes), np.concatenate(weights)


_SIDE_RULES: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}


def _cached_side_rule(levels: int):
    if levels not in _SIDE_RULES:
        _SIDE_RULES[levels] = _side_rule(levels)
    return _SIDE_RULES[levels]


def _interpolation_matrix(u: np.ndarray) -> np.ndarray:
    """Lagrange interpolation from the 16 panel nodes to local coordinates u."""
    flat = u.reshape(-1)
    return BarycentricInterpolator(_GL_X, np.eye(GAUSS_ORDER))(flat).reshape(u.shape + (GAUSS_ORDER,))


def _foot_points(disc: DiscretizedCurve, tr, tz, panels, samples: int = 257):
    """Local coordinate of the closest point of each panel and its distance."""
    x = np.linspace(-1.0, 1.0, samples)
    bounds = disc.panel_bounds
    a, b = bounds[panels, 0], bounds[panels, 1]
    t = a[:, None] + 0.5 * (x[None, :] + 1.0) * (b - a)[:, None]
    f = curve_frame(disc.curve, np.clip(t, 0.0, 1.0).reshape(-1))
    dist = np.hypot(f.r.reshape(t.shape) - tr[:, None], f.z.reshape(t.shape) - tz[:, None])
    i = np.argmin(dist, axis=1)
    rows = np.arange(len(panels))
    jac = f.jacobian.reshape(t.shape)[rows, i]
    return x[i], dist[rows, i], jac


def _near_contributions(
    disc: DiscretizedCurve,
    k: complex,
    modes: np.ndarray,
    target: Tuple[np.ndarray, ...],
    pair_targets: np.ndarray,
    pair_panels: np.ndarray,
    self_nodes: np.ndarray,
    adjoint: bool,
):
    """
    Graded-quadrature contributions of near source panels.

    The rule runs from the anchor (closest point, or the target node of a
    self pair) to both panel ends; an anchor on a panel end has one side.

    Args:
        modes: Increasing azimuthal modes to assemble
        target: (r, z, nr, nz) arrays of all targets
        pair_targets, pair_panels: Near (target, source panel) pairs
        self_nodes: Local node index of the target within its own panel for
            self pairs, -1 otherwise

    Returns:
        Tuple of (G, len(modes), 16) arrays for S, D and K' (or None)
    """
    tr, tz, tnr, tnz = target
    g_count = pair_targets.size
    x_anchor = np.empty(g_count)
    levels = np.full(g_count, _SELF_LEVELS, dtype=int)

    is_self = self_nodes >= 0
    x_anchor[is_self] = _GL_X[self_nodes[is_self]]
    other = np.flatnonzero(~is_self)
    if other.size:
        xf, dist, jac = _foot_points(disc, tr[pair_targets[other]], tz[pair_targets[other]],
                                     pair_panels[other])
        half_dt = 0.5 * np.diff(disc.panel_bounds[pair_panels[other]], axis=1)[:, 0]
        dx = np.maximum(dist / (jac * half_dt), 1e-14)
        lv = np.ceil(np.log(dx) / np.log(_GRADING_RATIO))
        x_anchor[other] = xf
        levels[other] = np.clip(lv + 1, 2, 12).astype(int)

    modes = np.asarray(modes, dtype=int)
    shape = (g_count, modes.size, GAUSS_ORDER)
    out_s = np.zeros(shape, dtype=complex)
    out_d = np.zeros(shape, dtype=complex)
    out_k = np.zeros(shape, dtype=complex) if adjoint else None
    bounds = disc.panel_bounds
    # -1: left side only, 1: right side only, 0: both
    sides = np.where(x_anchor >= 1.0, -1, np.where(x_anchor <= -1.0, 1, 0))

    for lv, side in sorted(set(zip(levels.tolist(), sides.tolist()))):
        sel = np.flatnonzero((levels == lv) & (sides == side))
        sigma, omega = _cached_side_rule(lv)
        xa = x_anchor[sel][:, None]
        parts_u, parts_w = [], []
        if side <= 0:
            left = xa + 1.0
            parts_u.append(xa - left * sigma)
            parts_w.append(left * omega)
        if side >= 0:
            right = 1.0 - xa
            parts_u.append(xa + right * sigma)
            parts_w.append(right * omega)
        u = np.clip(np.concatenate(parts_u, axis=1), -1.0, 1.0)
        wu = np.concatenate(parts_w, axis=1)
        pa, pb = bounds[pair_panels[sel], 0][:, None], bounds[pair_panels[sel], 1][:, None]
        t = pa + 0.5 * (u + 1.0) * (pb - pa)
        f = curve_frame(disc.curve, t.reshape(-1))
        fine_w = (wu * 0.5 * (pb - pa)).reshape(-1) * f.jacobian * f.r / FOUR_PI
        tgt = np.repeat(pair_targets[sel], u.shape[1])
        table = modal_kernels(
            tr[tgt], tz[tgt], f.r, f.z, f.nr, f.nz, int(modes[-1]), k,
            target_nr=tnr[tgt] if adjoint else None,
            target_nz=tnz[tgt] if adjoint else None,
            modes=modes,
        )
        interp = _interpolation_matrix(u) * fine_w.reshape(u.shape)[..., None]
        n_fine = u.shape[1]
        for dest, values in zip((out_s, out_d, out_k), table):
            if dest is not None:
                dest[sel] = np.einsum(
                    "gfm,gfk->gmk", values.reshape(sel.size, n_fine, modes.size), interp
                )
    return out_s, out_d, out_k


def _near_panels(disc: DiscretizedCurve, tr, tz, factor: float = 1.0) -> np.ndarray:
    """Boolean (targets, panels): some node of the panel lies within factor * its length."""
    lengths = disc.panel_lengths
    d = np.hypot(tr[:, None] - disc.r[None, :], tz[:, None] - disc.z[None, :])
    d = d.reshape(len(tr), disc.panel_count, GAUSS_ORDER).min(axis=2)
    return d < factor * lengths[None, :]


def assemble_operators(
    disc: DiscretizedCurve,
    k: complex,
    m_max: int,
    adjoint: bool = False,
    modes: Optional[Sequence[int]] = None,
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Nystrom matrices of the modes 0..m_max, or of the listed modes only.

    Returns:
        (A, B) with A[i] = 1/2 I + D_m + ik S_m for the i-th mode m and, when
        adjoint is set, B[i] = 1/2 I + K'_m + ik S_m; both (modes, N, N)
    """
    modes = np.arange(m_max + 1) if modes is None else np.asarray(modes, dtype=int)
    n = disc.node_count
    ik = 1j * k
    A = np.zeros((modes.size, n, n), dtype=complex)
    B = np.zeros((modes.size, n, n), dtype=complex) if adjoint else None
    src_w = disc.arclength_weights * disc.r / FOUR_PI
    lengths = disc.panel_lengths
    target = (disc.r, disc.z, disc.nr, disc.nz)

    near = _near_panels(disc, disc.r, disc.z)
    near[np.arange(n), disc.panel_index] = True
    near_nodes = np.repeat(near, GAUSS_ORDER, axis=1)

    for start in range(0, n, _TARGET_BLOCK):
        rows = np.arange(start, min(n, start + _TARGET_BLOCK))
        ti, sj = np.nonzero(~near_nodes[rows])
        ti = rows[ti]
        if ti.size:
            table = modal_kernels(
                disc.r[ti], disc.z[ti], disc.r[sj], disc.z[sj], disc.nr[sj], disc.nz[sj],
                m_max, k,
                target_nr=disc.nr[ti] if adjoint else None,
                target_nz=disc.nz[ti] if adjoint else None,
                panel_length=lengths[disc.panel_index[sj]],
                modes=modes,
            )
            w = src_w[sj][:, None]
            A[:, ti, sj] = ((table.double + ik * table.single) * w).T
            if adjoint:
                B[:, ti, sj] = ((table.adjoint + ik * table.single) * w).T

        pt, pp = np.nonzero(near[rows])
        pt = rows[pt]
        self_nodes = np.where(disc.panel_index[pt] == pp, pt % GAUSS_ORDER, -1)
        s, d, kp = _near_contributions(disc, k, modes, target, pt, pp, self_nodes, adjoint)
        cols = pp[:, None] * GAUSS_ORDER + np.arange(GAUSS_ORDER)[None, :]
        A[:, pt[:, None], cols] = np.transpose(d + ik * s, (1, 0, 2))
        if adjoint:
            B[:, pt[:, None], cols] = np.transpose(kp + ik * s, (1, 0, 2))

    idx = np.arange(n)
    A[:, idx, idx] += 0.5
    if adjoint:
        B[:, idx, idx] += 0.5
    return A, B


def assemble_modal_system(m: int, k: complex, disc: DiscretizedCurve) -> ModalLinearSystem:
    """
    Factorized Nystrom system of a single mode.

    The system of mode -m equals that of mode m.
    """
    m = abs(int(m))
    A, _ = assemble_operators(disc, k, m, modes=[m])
    return ModalLinearSystem(m, A[0])


class ForwardSolver:
    """
    Forward scattering operator of one obstacle at one wavenumber.

    Holds the discretization, the per-mode factorizations and, on request,
    the adjoint factorizations; every incident direction at this wavenumber
    reuses them.

    Attributes:
        curve: Generating curve of the obstacle (axis frame)
        k: Wavenumber
        disc: Panel discretization
        m_max: Highest azimuthal mode
    """

    def __init__(
        self,
        curve: BandLimitedRadialCurve,
        k: float,
        config: Optional[Config] = None,
        m_max: Optional[int] = None,
        adjoint: bool = False,
        threads: Optional[int] = None,
        disc: Optional[DiscretizedCurve] = None,
    ):
        self.config = config if config is not None else Config()
        fwd = self.config.get_section("forward")
        self.curve = curve
        self.k = k
        self.threads = threads or fwd.get("threads", 1)
        self.disc = disc if disc is not None else build_panels(
            curve, abs(k),
            ppw=fwd["points_per_wavelength"],
            max_panels=fwd["max_panels"],
            min_panels=fwd["min_panels"],
        )
        self.m_max = m_max if m_max is not None else mode_truncation(k, self.disc, fwd["mode_tolerance"])
        self.adjoint = adjoint
        self.timings: Dict[str, float] = {}
        self._systems: Optional[List[ModalLinearSystem]] = None
        self._adjoint_systems: Optional[List[ModalLinearSystem]] = None

    def _factor(self, matrices: np.ndarray) -> List[ModalLinearSystem]:
        def build(m):
            return ModalLinearSystem(m, matrices[m])
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                return list(pool.map(build, range(self.m_max + 1)))
        return [build(m) for m in range(self.m_max + 1)]

    def _ensure_systems(self) -> None:
        if self._systems is not None and (self._adjoint_systems is not None or not self.adjoint):
            return
        start = time.perf_counter()
        A, B = assemble_operators(self.disc, self.k, self.m_max, adjoint=self.adjoint)
        self.timings["assemble"] = time.perf_counter() - start
        start = time.perf_counter()
        self._systems = self._factor(A)
        if self.adjoint:
            self._adjoint_systems = self._factor(B)
        self.timings["factor"] = time.perf_counter() - start
        logger.info(
            "Factorized %d modes at k=%.4g (%d nodes, %d panels)",
            self.m_max + 1, np.real(self.k), self.disc.node_count, self.disc.panel_count,
        )

    @property
    def systems(self) -> List[ModalLinearSystem]:
        self._ensure_systems()
        return self._systems

    @property
    def adjoint_systems(self) -> List[ModalLinearSystem]:
        if not self.adjoint:
            self.adjoint = True
            self._adjoint_systems = None
        self._ensure_systems()
        return self._adjoint_systems

    def incident_rhs(self, wave: IncidentWave):
        d = self.disc
        return _incident_tables(wave, d.r, d.z, d.nr, d.nz, self.m_max, self.k)

    def solve(self, waves: Sequence[IncidentWave]) -> List[ModalDensitySet]:
        """Densities (and, with the adjoint, boundary normal derivatives) per wave."""
        systems = self.systems
        start = time.perf_counter()
        result = []
        tables = [self.incident_rhs(w) for w in waves]
        rhs = np.stack([-t[0] for t in tables], axis=2)
        mu = np.stack([systems[m].solve(rhs[m]) for m in range(self.m_max + 1)])
        dn = None
        if self.adjoint:
            adj = self.adjoint_systems
            brhs = np.stack([t[1] + 1j * self.k * t[0] for t in tables], axis=2)
            dn = np.stack([adj[m].solve(brhs[m]) for m in range(self.m_max + 1)])
        for i, wave in enumerate(waves):
            result.append(ModalDensitySet(
                wave, mu[:, :, i], None if dn is None else dn[:, :, i]
            ))
        self.timings["solve"] = time.perf_counter() - start
        return result

    def solve_data(self, data: np.ndarray, wave: IncidentWave) -> ModalDensitySet:
        """Solve for boundary data given as modes (m_max + 1, N) with the wave's mode symmetry."""
        systems = self.systems
        mu = np.stack([systems[m].solve(data[m]) for m in range(self.m_max + 1)])
        return ModalDensitySet(wave, mu)

    def scattered(self, densities: Sequence[ModalDensitySet], points: np.ndarray, **kwargs) -> np.ndarray:
        return eval_scattered(densities, self.disc, self.k, points, **kwargs)


def solve_modes(
    k: float,
    disc: DiscretizedCurve,
    waves: Sequence[IncidentWave],
    m_max: int,
    config: Optional[Config] = None,
) -> List[ModalDensitySet]:
    """
    Solve every mode 0..m_max for a list of waves sharing wavenumber k.

    Each mode is factorized once; all right-hand sides reuse it.
    """
    if any(abs(w.k - k) > 1e-12 * max(1.0, abs(k)) for w in waves):
        raise ValueError("all waves must share the solver wavenumber")
    solver = ForwardSolver(disc.curve, k, config=config, m_max=m_max, disc=disc)
    return solver.solve(waves)


def _cylindrical(points: np.ndarray):
    p = np.atleast_2d(np.asarray(points, dtype=float))
    return np.hypot(p[:, 0], p[:, 1]), np.arctan2(p[:, 1], p[:, 0]), p[:, 2]


def eval_scattered(
    densities: Sequence[ModalDensitySet],
    disc: DiscretizedCurve,
    k: complex,
    points: np.ndarray,
    near: str = "error",
    block: int = 64,
) -> np.ndarray:
    """
    Scattered field of solved densities at points of the axis frame.

    u(x) = sum_m e^{i m theta_x} int_gamma (dG_m/dnu + ik G_m) mu_m r' ds / (4 pi)

    Args:
        densities: One ModalDensitySet per wave (or a single set)
        disc: Discretization the densities live on
        k: Wavenumber
        points: (P, 3) evaluation points
        near: "error" rejects points closer to a panel than its length,
            "refine" integrates those panels with the graded rule
        block: Points per kernel batch

    Returns:
        (P,) for a single set, else (waves, P)

    Raises:
        NearSurfaceError: If a point is too close and near == "error"
    """
    single = isinstance(densities, ModalDensitySet)
    sets = [densities] if single else list(densities)
    if not sets:
        raise ValueError("no densities given")
    rx, thx, zx = _cylindrical(points)
    m_max = sets[0].mode_count
    mu = np.stack([s.densities for s in sets])
    out = np.zeros((len(sets), rx.size), dtype=complex)

    near_mask = _near_panels(disc, rx, zx)
    if np.any(near_mask) and near != "refine":
        raise NearSurfaceError(
            f"{int(np.any(near_mask, axis=1).sum())} evaluation point(s) lie within one "
            "panel length of the surface"
        )
    near_nodes = np.repeat(near_mask, GAUSS_ORDER, axis=1)
    src_w = disc.arclength_weights * disc.r / FOUR_PI
    lengths = disc.panel_lengths[disc.panel_index]
    n = disc.node_count

    for start in range(0, rx.size, block):
        rows = np.arange(start, min(rx.size, start + block))
        b = rows.size
        ti = np.repeat(rows, n)
        sj = np.tile(np.arange(n), b)
        table = modal_kernels(
            rx[ti], zx[ti], disc.r[sj], disc.z[sj], disc.nr[sj], disc.nz[sj],
            m_max, k, panel_length=lengths[sj],
        )
        kern = ((table.double + 1j * k * table.single) * src_w[sj][:, None]).reshape(b, n, m_max + 1)
        kern = np.where(near_nodes[rows][:, :, None], 0.0, kern)
        modal = np.einsum("bnm,wmn->wbm", kern, mu)

        pt, pp = np.nonzero(near_mask[rows])
        if pt.size:
            target = (rx, zx, np.zeros_like(rx), np.zeros_like(rx))
            s, d, _ = _near_contributions(
                disc, k, np.arange(m_max + 1), target, rows[pt], pp, np.full(pt.size, -1), False
            )
            cols = pp[:, None] * GAUSS_ORDER + np.arange(GAUSS_ORDER)[None, :]
            dens = mu[:, :, cols]  # (w, m, G, 16)
            contrib = np.einsum("gmk,wmgk->wgm", d + 1j * k * s, dens)
            np.add.at(modal, (slice(None), pt), contrib)

        for w, dset in enumerate(sets):
            c = dset.azimuthal_weights(thx[rows])
            out[w, rows] = np.sum(modal[w] * c, axis=1)
    return out[0] if single else out


def eval_total(
    densities: ModalDensitySet,
    disc: DiscretizedCurve,
    k: float,
    points: np.ndarray,
) -> np.ndarray:
    """Total field u_inc + u_scat, refining near-surface points."""
    scat = eval_scattered(densities, disc, k, points, near="refine")
    return densities.wave.evaluate(points) + scat


def normal_derivative_modes(solver: ForwardSolver, waves: Sequence[IncidentWave]) -> List[np.ndarray]:
    """Modes (m_max + 1, N) of the total-field normal derivative on the boundary."""
    if not solver.adjoint:
        solver.adjoint_systems
    return [s.normal_derivative for s in solver.solve(waves)]


def forward_operator(
    curve: BandLimitedRadialCurve,
    frame: AxisFrame,
    k: float,
    waves: Sequence[IncidentWave],
    receptors: np.ndarray,
    config: Optional[Config] = None,
    solver: Optional[ForwardSolver] = None,
) -> MeasurementSet:
    """
    Scattered field of a placed obstacle at world-frame receptors.

    The obstacle is the surface of revolution of `curve` about the axis of
    `frame`. Waves and receptors are mapped into the axis frame; the phase
    e^{ik d.c} of the shifted origin c is restored afterwards.

    Returns:
        MeasurementSet with one block per wave, keyed (k, wave index)
    """
    receptors = np.atleast_2d(np.asarray(receptors, dtype=float))
    bound = curve.max_radius()
    centre = frame.center
    if np.any(np.linalg.norm(receptors - centre, axis=1) <= bound):
        raise NearSurfaceError("receptors must lie outside the obstacle's bounding sphere")
    if solver is None:
        solver = ForwardSolver(curve, k, config=config)
    local_points = world_to_axis_frame(receptors, frame)
    local_waves = [
        IncidentWave.towards(k, direction_to_axis_frame(w.direction, frame)) for w in waves
    ]
    sets = solver.solve(local_waves)
    fields = eval_scattered(sets, solver.disc, k, local_points)
    result = MeasurementSet(receptors, [w.direction for w in waves])
    for i, w in enumerate(waves):
        shift = np.exp(1j * k * np.dot(w.direction, centre))
        result.add(k, i, shift * fields[i])
    return result
