"""
Shape reconstruction of the generating curve.

The forward map F_k sends a band-limited radial profile to the scattered
field at the receptors. Each damped Gauss-Newton step solves the linearized
problem J h = u_meas - F_k(gamma) in least squares, where the columns of J
are shape derivatives: for a boundary displacement dgamma the derivative
field solves the exterior Dirichlet problem with data -(dgamma.nu) du/dnu.
The recursive linearization driver sweeps an increasing frequency schedule,
raising the profile band limit with k and warm-starting each frequency with
the previous reconstruction.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import qr, solve_triangular
from scipy.spatial.distance import directed_hausdorff

from .config import Config
from .curves import (
    AxisFrame,
    BandLimitedRadialCurve,
    cross_section,
    direction_to_axis_frame,
    eval_radial,
    world_to_axis_frame,
)
from .errors import ConfigError, InvalidCurveError, ShapeMismatchError
from .forward import (
    ForwardSolver,
    IncidentWave,
    MeasurementSet,
    ModalDensitySet,
    eval_scattered,
)

logger = logging.getLogger(__name__)

ALPHA_RULES = ("constant", "scaled", "freq_scaled")
STOP_REASONS = ("max_iters", "residual_tol", "step_tol", "residual_increase")
LSTSQ_TRUNCATION = 1e-10
MAX_HALVINGS = 5


@dataclass(frozen=True)
class InversionConfig:
    """
    Settings of the damped Gauss-Newton solver and the frequency sweep.

    Attributes:
        alpha: Damping constant
        alpha_rule: "constant" (alpha), "scaled" (alpha/|h|) or
            "freq_scaled" (alpha/(k |h|))
        alpha_first: Constant damping used at the first frequency instead of the rule
        max_iters: Gauss-Newton iterations per frequency
        residual_tol: Stop when the relative residual drops to this value
        step_tol: Stop when the applied update norm drops to this value
        np_factor: Band limit N_p = floor(np_factor * k)
        np_max: Optional cap on N_p
        filter_sigma2: Optional Gaussian filter width
        schedule: Strictly increasing wavenumbers
    """
    alpha: float = 0.1
    alpha_rule: str = "scaled"
    alpha_first: Optional[float] = None
    max_iters: int = 10
    residual_tol: float = 0.03
    step_tol: float = 0.03
    np_factor: float = 2.0
    np_max: Optional[int] = None
    filter_sigma2: Optional[float] = None
    schedule: Tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "schedule", tuple(float(k) for k in self.schedule))
        if self.alpha_rule not in ALPHA_RULES:
            raise ConfigError(f"alpha_rule must be one of {', '.join(ALPHA_RULES)}")
        if self.alpha <= 0 or (self.alpha_first is not None and self.alpha_first <= 0):
            raise ConfigError("alpha must be positive")
        if self.max_iters < 0:
            raise ConfigError("max_iters must be non-negative")
        if self.residual_tol <= 0 or self.step_tol <= 0:
            raise ConfigError("eps_r and eps_s must be positive")
        if self.np_factor <= 0 or (self.np_max is not None and self.np_max < 0):
            raise ConfigError("band-limit rule must be positive")
        if self.filter_sigma2 is not None and self.filter_sigma2 <= 0:
            raise ConfigError("filter_sigma2 must be positive")
        if not self.schedule or any(k <= 0 for k in self.schedule):
            raise ConfigError("frequency schedule must hold positive wavenumbers")
        if any(b <= a for a, b in zip(self.schedule[:-1], self.schedule[1:])):
            raise ConfigError("frequency schedule must be strictly increasing")

    def band_limit(self, k: float) -> int:
        n_p = int(math.floor(self.np_factor * k + 1e-12))
        return n_p if self.np_max is None else min(self.np_max, n_p)

    def damping(self, k: float, step_norm: float, first: bool = False) -> float:
        """Step factor of an update with coefficient norm step_norm, at most 1."""
        if first and self.alpha_first is not None:
            alpha = self.alpha_first
        elif self.alpha_rule == "constant":
            alpha = self.alpha
        elif self.alpha_rule == "scaled":
            alpha = self.alpha / step_norm
        else:
            alpha = self.alpha / (k * step_norm)
        # a damped step never goes past the full Gauss-Newton step
        return min(alpha, 1.0)


@dataclass
class IterationRecord:
    iteration: int
    residual: float
    step_norm: float
    alpha: float
    accepted: bool
    reason: str = ""


@dataclass
class GaussNewtonTrace:
    """Per-iteration history of one damped Gauss-Newton run."""
    k: float
    band_limit: int
    records: List[IterationRecord] = field(default_factory=list)
    stop_reason: str = ""
    seconds: float = 0.0

    @property
    def final_residual(self) -> float:
        accepted = [r.residual for r in self.records if r.accepted]
        return accepted[-1] if accepted else float("nan")

    @property
    def accepted_iterations(self) -> int:
        return sum(1 for r in self.records if r.accepted and r.iteration > 0)


@dataclass
class JacobianMatrix:
    """
    Shape derivative of the forward map at one wavenumber.

    Rows run over (direction, receptor) in direction-major order; columns
    over the update coefficients (h0, hc_1..hc_Np, hs_1..hs_Np).
    """
    matrix: np.ndarray = field(repr=False)
    k: float
    band_limit: int

    def __post_init__(self):
        if self.matrix.shape[1] != 2 * self.band_limit + 1:
            raise ShapeMismatchError(
                f"Jacobian has {self.matrix.shape[1]} columns, expected {2 * self.band_limit + 1}"
            )
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("Jacobian has non-finite entries")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.matrix.shape


def basis_profiles(t: np.ndarray, band_limit: int) -> np.ndarray:
    """Basis functions (1, cos 2 pi j (t-.5), sin 2 pi j (t-.5)) as (len(t), 2 N_p + 1)."""
    t = np.asarray(t, dtype=float)
    ones = np.ones((t.size, 1))
    if band_limit == 0:
        return ones
    phase = 2.0 * np.pi * np.multiply.outer(t - 0.5, np.arange(1, band_limit + 1))
    return np.hstack((ones, np.cos(phase), np.sin(phase)))


class Linearization:
    """
    Forward prediction and shape derivatives of one curve at one wavenumber.

    The modal factorizations of the forward and adjoint systems are built once
    and shared by the prediction, every Jacobian column and every direction.
    """

    def __init__(
        self,
        curve: BandLimitedRadialCurve,
        frame: AxisFrame,
        k: float,
        waves: Sequence[IncidentWave],
        receptors: np.ndarray,
        config: Optional[Config] = None,
        threads: int = 1,
    ):
        self.curve = curve
        self.frame = frame
        self.k = k
        self.world_waves = list(waves)
        self.receptors = np.atleast_2d(np.asarray(receptors, dtype=float))
        self.solver = ForwardSolver(curve, k, config=config, adjoint=True, threads=threads)
        self.local_points = world_to_axis_frame(self.receptors, frame)
        self.local_waves = [
            IncidentWave.towards(k, direction_to_axis_frame(w.direction, frame))
            for w in self.world_waves
        ]
        self.shifts = np.array([
            np.exp(1j * k * np.dot(w.direction, frame.center)) for w in self.world_waves
        ])
        self._densities: Optional[List[ModalDensitySet]] = None

    @property
    def densities(self) -> List[ModalDensitySet]:
        if self._densities is None:
            self._densities = self.solver.solve(self.local_waves)
        return self._densities

    def prediction(self) -> np.ndarray:
        """F_k(gamma) stacked over directions."""
        fields = eval_scattered(self.densities, self.solver.disc, self.k, self.local_points)
        return (fields * self.shifts[:, None]).reshape(-1)

    def normal_displacement(self, columns: Sequence[int], band_limit: int) -> np.ndarray:
        """dgamma.nu at the nodes for the requested basis columns, (len(columns), N)."""
        disc = self.solver.disc
        basis = basis_profiles(disc.t, band_limit)[:, list(columns)]
        angle = np.pi * (disc.t - 0.5)
        radial_dot_normal = np.cos(angle) * disc.nr + np.sin(angle) * disc.nz
        return (basis * radial_dot_normal[:, None]).T

    def columns(self, columns: Sequence[int], band_limit: int, displacement=None) -> np.ndarray:
        """
        Derivative fields for the given basis columns.

        Args:
            columns: Basis indices in (h0, hc_1.., hs_1..) order
            band_limit: N_p of the basis
            displacement: Optional explicit (len(columns), N) normal displacement

        Returns:
            Complex (rows, len(columns)) block of the Jacobian
        """
        disp = self.normal_displacement(columns, band_limit) if displacement is None else displacement
        dens = self.densities
        systems = self.solver.systems
        m_max = self.solver.m_max
        sets = []
        for w, d in enumerate(dens):
            # Boundary data -(dgamma.nu) du/dnu, per mode and per column.
            data = -disp[None, :, :] * d.normal_derivative[:, None, :]
            mu = np.stack([
                systems[m].solve(data[m].T).T for m in range(m_max + 1)
            ])
            for c in range(disp.shape[0]):
                sets.append(ModalDensitySet(d.wave, mu[:, c, :]))
        fields = eval_scattered(sets, self.solver.disc, self.k, self.local_points)
        n_cols = disp.shape[0]
        fields = fields.reshape(len(dens), n_cols, -1) * self.shifts[:, None, None]
        return np.transpose(fields, (0, 2, 1)).reshape(-1, n_cols)

    def jacobian(self, band_limit: int) -> JacobianMatrix:
        matrix = self.columns(range(2 * band_limit + 1), band_limit)
        return JacobianMatrix(matrix, self.k, band_limit)


def frechet_column(
    curve: BandLimitedRadialCurve,
    frame: AxisFrame,
    k: float,
    waves: Sequence[IncidentWave],
    receptors: np.ndarray,
    mode_shape: int,
    band_limit: Optional[int] = None,
    config: Optional[Config] = None,
) -> np.ndarray:
    """
    Shape derivative of the receptor data along one basis perturbation.

    Args:
        curve: Current generating curve
        frame: Axis frame placing the obstacle
        k: Wavenumber
        waves: World-frame incident waves
        receptors: (M, 3) world receptors
        mode_shape: Basis index in (h0, hc_1..hc_Np, hs_1..hs_Np) order
        band_limit: N_p of the basis (defaults to the curve's)

    Returns:
        Complex vector of length len(waves) * M
    """
    n_p = curve.band_limit if band_limit is None else band_limit
    if not 0 <= mode_shape <= 2 * n_p:
        raise ValueError(f"basis index {mode_shape} outside 0..{2 * n_p}")
    lin = Linearization(curve, frame, k, waves, receptors, config)
    return lin.columns([mode_shape], n_p)[:, 0]


def assemble_jacobian(
    curve: BandLimitedRadialCurve,
    frame: AxisFrame,
    k: float,
    waves: Sequence[IncidentWave],
    receptors: np.ndarray,
    band_limit: int,
    config: Optional[Config] = None,
    threads: int = 1,
) -> JacobianMatrix:
    """Stack all 2 N_p + 1 shape-derivative columns on one set of factorizations."""
    if band_limit < 0:
        raise ValueError("band limit must be non-negative")
    lin = Linearization(curve, frame, k, waves, receptors, config, threads)
    return lin.jacobian(band_limit)


def gauss_newton_step(J: JacobianMatrix, residual: np.ndarray) -> np.ndarray:
    """
    Real least-squares solution of J h = residual.

    Real and imaginary parts are stacked into a real system, solved by a
    column-pivoted QR factorization truncated at relative 1e-10.

    Returns:
        Real coefficient vector of length 2 N_p + 1
    """
    matrix = J.matrix if isinstance(J, JacobianMatrix) else np.asarray(J)
    residual = np.asarray(residual)
    if matrix.shape[0] != residual.shape[0]:
        raise ShapeMismatchError(
            f"residual has {residual.shape[0]} entries, Jacobian {matrix.shape[0]} rows"
        )
    if matrix.shape[0] < matrix.shape[1]:
        raise ShapeMismatchError("least-squares step needs at least as many rows as columns")
    a = np.vstack((matrix.real, matrix.imag))
    b = np.concatenate((residual.real, residual.imag))
    q, r, perm = qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(matrix.shape[1])
    rank = int(np.sum(diag > LSTSQ_TRUNCATION * diag[0]))
    if rank < matrix.shape[1]:
        logger.warning(
            "Gauss-Newton system is rank deficient: rank %d of %d", rank, matrix.shape[1]
        )
    y = solve_triangular(r[:rank, :rank], q[:, :rank].T @ b)
    h = np.zeros(matrix.shape[1])
    h[perm[:rank]] = y
    return h


def gaussian_filter(h: np.ndarray, band_limit: int, sigma2: float) -> np.ndarray:
    """
    Low-pass filter l_j = exp(-(j/N_p)^2 / sigma2) on mode-j coefficients.

    The constant term is left unchanged.
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    h = np.asarray(h, dtype=float)
    if h.size != 2 * band_limit + 1:
        raise ShapeMismatchError(f"expected {2 * band_limit + 1} coefficients, got {h.size}")
    if band_limit == 0:
        return h.copy()
    j = np.arange(1, band_limit + 1)
    ell = np.exp(-((j / band_limit) ** 2) / sigma2)
    return np.concatenate((h[:1], h[1:band_limit + 1] * ell, h[band_limit + 1:] * ell))


def _relative(residual: np.ndarray, scale: float) -> float:
    return float(np.linalg.norm(residual) / scale) if scale > 0 else float(np.linalg.norm(residual))


def damped_gauss_newton(
    data: MeasurementSet,
    k: float,
    initial: BandLimitedRadialCurve,
    cfg: InversionConfig,
    frame: AxisFrame = AxisFrame(),
    config: Optional[Config] = None,
    first_frequency: bool = True,
    threads: int = 1,
) -> Tuple[BandLimitedRadialCurve, GaussNewtonTrace]:
    """
    Damped Gauss-Newton iteration at one wavenumber.

    Iterates while the relative residual exceeds eps_r, the applied update
    exceeds eps_s and fewer than N_it steps were taken. A step that raises
    the residual is reverted and ends the run.

    Args:
        data: Measurements containing blocks at k
        k: Wavenumber
        initial: Starting curve; its band limit sets N_p of the updates
        cfg: Solver settings
        frame: Axis frame of the obstacle
        config: Forward-solver settings
        first_frequency: Whether alpha_first applies

    Returns:
        (reconstructed curve, trace)

    Raises:
        InvalidCurveError: If no damped update keeps the profile positive
    """
    initial.check_positive()
    start = time.perf_counter()
    n_p = initial.band_limit
    waves = data.waves_at(k)
    meas = data.stacked(k)
    scale = float(np.linalg.norm(meas))
    trace = GaussNewtonTrace(k, n_p)

    curve = initial
    lin = Linearization(curve, frame, k, waves, data.receptors, config, threads)
    pred = lin.prediction()
    residual = _relative(meas - pred, scale)
    trace.records.append(IterationRecord(0, residual, 0.0, 0.0, True))
    logger.debug("k=%.4g iter 0: residual %.4e", k, residual)

    for it in range(1, cfg.max_iters + 1):
        if residual <= cfg.residual_tol:
            trace.stop_reason = "residual_tol"
            break
        h = gauss_newton_step(lin.jacobian(n_p), meas - pred)
        if cfg.filter_sigma2 is not None:
            h = gaussian_filter(h, n_p, cfg.filter_sigma2)
        h_norm = float(np.linalg.norm(h))
        if h_norm == 0.0:
            trace.stop_reason = "step_tol"
            break
        alpha = cfg.damping(k, h_norm, first_frequency)
        candidate = None
        for attempt in range(MAX_HALVINGS + 1):
            trial = curve.plus(BandLimitedRadialCurve.from_vector(h, n_p), alpha)
            if trial.is_positive():
                candidate = trial
                break
            logger.warning("Update at k=%.4g loses positivity, halving alpha to %.3g", k, alpha / 2)
            alpha /= 2.0
        if candidate is None:
            raise InvalidCurveError(
                f"update at k={k:g} keeps losing positivity after {MAX_HALVINGS} halvings"
            )

        trial_lin = Linearization(candidate, frame, k, waves, data.receptors, config, threads)
        trial_pred = trial_lin.prediction()
        trial_residual = _relative(meas - trial_pred, scale)
        step_norm = alpha * h_norm
        if trial_residual > residual:
            trace.records.append(IterationRecord(it, trial_residual, step_norm, alpha, False, "residual_increase"))
            trace.stop_reason = "residual_increase"
            logger.debug("k=%.4g iter %d: residual rose to %.4e, reverted", k, it, trial_residual)
            break
        curve, lin, pred, residual = candidate, trial_lin, trial_pred, trial_residual
        trace.records.append(IterationRecord(it, residual, step_norm, alpha, True))
        logger.debug("k=%.4g iter %d: residual %.4e, step %.3e", k, it, residual, step_norm)
        if step_norm <= cfg.step_tol:
            trace.stop_reason = "step_tol"
            break
    else:
        trace.stop_reason = "residual_tol" if residual <= cfg.residual_tol else "max_iters"

    trace.records[-1].reason = trace.records[-1].reason or trace.stop_reason
    trace.seconds = time.perf_counter() - start
    return curve, trace


@dataclass
class RecursiveResult:
    """Reconstructions and traces of a frequency sweep, up to any failure."""
    curves: List[BandLimitedRadialCurve] = field(default_factory=list)
    traces: List[GaussNewtonTrace] = field(default_factory=list)
    wavenumbers: List[float] = field(default_factory=list)
    failed_at: Optional[float] = None
    error: Optional[str] = None

    @property
    def final(self) -> Optional[BandLimitedRadialCurve]:
        return self.curves[-1] if self.curves else None

    @property
    def completed(self) -> bool:
        return self.failed_at is None


def recursive_linearization(
    data: MeasurementSet,
    initial: BandLimitedRadialCurve,
    cfg: InversionConfig,
    frame: AxisFrame = AxisFrame(),
    config: Optional[Config] = None,
    threads: int = 1,
    callback: Optional[Callable[[float, BandLimitedRadialCurve, GaussNewtonTrace], None]] = None,
) -> RecursiveResult:
    """
    Sweep the frequency schedule with warm-started Gauss-Newton runs.

    At each k the band limit becomes N_p = min(N_max, floor(c k)); the previous
    coefficients are zero-padded (or truncated) to it. A failing frequency ends
    the sweep; everything reconstructed before it is kept in the result.
    """
    available = set(data.wavenumbers)
    missing = [k for k in cfg.schedule if k not in available]
    if missing:
        raise ValueError(f"no measurements at k = {', '.join(f'{k:g}' for k in missing)}")
    result = RecursiveResult()
    curve = initial
    for i, k in enumerate(cfg.schedule):
        n_p = cfg.band_limit(k)
        curve = curve.with_band_limit(n_p)
        try:
            curve, trace = damped_gauss_newton(
                data, k, curve, cfg, frame=frame, config=config,
                first_frequency=(i == 0), threads=threads,
            )
        except Exception as e:
            logger.error("Reconstruction failed at k=%g: %s", k, e)
            result.failed_at = k
            result.error = str(e)
            break
        result.curves.append(curve)
        result.traces.append(trace)
        result.wavenumbers.append(k)
        logger.info(
            "k=%.4g N_p=%d: %d iterations, residual %.4e (%s)",
            k, n_p, trace.accepted_iterations, trace.final_residual, trace.stop_reason,
        )
        if callback is not None:
            callback(k, curve, trace)
    return result


@dataclass
class ObjectiveScan:
    """Objective values over constant profiles and the convex bracket around the centre."""
    radii: np.ndarray
    values: np.ndarray
    bracket: Tuple[float, float]


def local_maxima_bracket(radii: np.ndarray, values: np.ndarray, center: float = 1.0) -> Tuple[float, float]:
    """
    Nearest interior local maxima below and above `center`.

    Falls back to the scan endpoints where no maximum exists.
    """
    interior = np.flatnonzero((values[1:-1] > values[:-2]) & (values[1:-1] > values[2:])) + 1
    below = [i for i in interior if radii[i] < center]
    above = [i for i in interior if radii[i] > center]
    a = radii[below[-1]] if below else radii[0]
    b = radii[above[0]] if above else radii[-1]
    return float(a), float(b)


def objective_scan(
    data: MeasurementSet,
    k: float,
    radii: Optional[np.ndarray] = None,
    model: Optional[Callable[[float], np.ndarray]] = None,
    center: float = 1.0,
    config: Optional[Config] = None,
) -> ObjectiveScan:
    """
    Objective f_k(p0) = |u_meas - F_k(p0)| over constant profiles.

    Args:
        data: Measurements at k
        k: Wavenumber
        radii: Profile values to scan (default 0.01 j, j = 1..1000)
        model: Map radius -> stacked prediction; defaults to the Nystrom forward map
        center: Radius the bracket is taken around

    Returns:
        ObjectiveScan with the bracketing local maxima
    """
    radii = np.arange(1, 1001) * 0.01 if radii is None else np.asarray(radii, dtype=float)
    meas = data.stacked(k)
    waves = data.waves_at(k)
    if model is None:
        def model(p0):
            curve = BandLimitedRadialCurve.constant(p0)
            return Linearization(curve, AxisFrame(), k, waves, data.receptors, config).prediction()
    values = np.array([np.linalg.norm(meas - model(p0)) for p0 in radii])
    bracket = local_maxima_bracket(radii, values, center)
    logger.info("Objective scan at k=%g: bracket [%.2f, %.2f]", k, *bracket)
    return ObjectiveScan(radii, values, bracket)


def profile_error(truth: BandLimitedRadialCurve, recon: BandLimitedRadialCurve, samples: int = 1024) -> float:
    """Relative L2 error of p(t) on a uniform grid of [0, 1]."""
    t = np.linspace(0.0, 1.0, samples)
    p_true = eval_radial(truth, t)
    return float(np.linalg.norm(eval_radial(recon, t) - p_true) / np.linalg.norm(p_true))


def hausdorff_distance(truth: BandLimitedRadialCurve, recon: BandLimitedRadialCurve, samples: int = 1024) -> float:
    """Symmetric Hausdorff distance between the two cross-sections."""
    a = cross_section(truth, samples)
    b = cross_section(recon, samples)
    return float(max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0]))
