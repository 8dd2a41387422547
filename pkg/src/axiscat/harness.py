"""
Experiment harness behind the command-line tools.

A scene (truth obstacle, its axis frame, incident directions, receptors,
wavenumbers, noise and seed) is read from the `scene` section of the
configuration. The run_* functions tie the solver modules together and
write their results into an output directory.
"""

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .axis import find_axis
from .config import Config, frequency_schedule, inversion_config_from_mapping, load_inversion_config
from .curves import AxisFrame, BandLimitedRadialCurve, builtin_curve
from .errors import AxiscatError, ConfigError
from .farfield import angular_grid, obstacle_farfield, sphere_grid
from .fileio import (
    read_axis_report,
    read_curve,
    read_measurements,
    read_table,
    write_axis_report,
    write_curve,
    write_farfield,
    write_measurements,
    write_table,
    write_trace,
    write_yaml,
)
from .forward import ForwardSolver, IncidentWave, MeasurementSet, forward_operator
from .inversion import (
    InversionConfig,
    hausdorff_distance,
    objective_scan,
    profile_error,
    recursive_linearization,
)
from .oracles import sphere_scattered_field, sphere_series

logger = logging.getLogger(__name__)

APERTURE_RING = 3100
BENCH_WAVENUMBERS = (2.0, 4.0, 8.0)


# Incident directions


def sphere27_directions() -> List[Tuple[float, float, float]]:
    """25 directions on cones of polar angle m pi/6 plus the two axial ones."""
    dirs = []
    for m in range(1, 6):
        for n in range(1, 6):
            a, b = m * math.pi / 6, 2 * n * math.pi / 5
            dirs.append((math.sin(a) * math.cos(b), math.sin(a) * math.sin(b), math.cos(a)))
    return dirs + [(0.0, 0.0, -1.0), (0.0, 0.0, 1.0)]


def direction_set(spec, axis_section: Optional[Dict[str, Any]] = None) -> List[Tuple[float, float, float]]:
    """
    Named or explicit list of incident directions.

    Names: broadside (-x), axial (-z), oblique (tilted pi/9 from x),
    sphere27, axis-search (generic direction, +x, +y).

    Raises:
        ConfigError: On an unknown name or a zero direction
    """
    if isinstance(spec, str):
        if spec == "broadside":
            dirs = [(-1.0, 0.0, 0.0)]
        elif spec == "axial":
            dirs = [(0.0, 0.0, -1.0)]
        elif spec == "oblique":
            dirs = [(math.cos(math.pi / 9), 0.0, math.sin(math.pi / 9))]
        elif spec == "sphere27":
            dirs = sphere27_directions()
        elif spec == "axis-search":
            generic = tuple((axis_section or Config.DEFAULT_CONFIG["axis"])["generic_direction"])
            dirs = [generic, (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)]
        else:
            raise ConfigError(f"unknown direction set '{spec}'")
    else:
        dirs = [tuple(float(c) for c in d) for d in spec]
    out = []
    for d in dirs:
        norm = math.sqrt(sum(c * c for c in d))
        if len(d) != 3 or norm == 0.0:
            raise ConfigError(f"incident direction {d} is not a nonzero 3-vector")
        out.append(tuple(c / norm for c in d))
    return out


# Receptor layouts


def ring_receptors(
    count: int = 100,
    radius: float = 10.0,
    start: float = -math.pi / 2,
    aperture: Optional[int] = None,
) -> np.ndarray:
    """
    Receptors radius (cos a_m, 0, sin a_m) on a half ring in the x-z plane.

    a_m = start + (s + m) pi / (n - 1) for m = 0..count-1, where n is the
    number of positions on the full half ring (count, or `aperture` for a
    limited aperture) and s = (n - count) / 2 centres the used positions.
    """
    n = count if aperture is None else int(aperture)
    if count < 2 or n < count:
        raise ConfigError("ring needs at least two receptors and aperture >= count")
    shift = (n - count) / 2.0
    a = start + (shift + np.arange(count)) * math.pi / (n - 1)
    return radius * np.column_stack((np.cos(a), np.zeros(count), np.sin(a)))


def latitude_receptors(n_polar: int, n_azimuth: int, radius: float = 10.0) -> np.ndarray:
    """
    radius (sin a_l cos b_q, sin a_l sin b_q, cos a_l) with a_l = l pi/(n_polar + 1),
    b_q = 2 q pi / n_azimuth for l = 1..n_polar, q = 1..n_azimuth.
    """
    a = np.arange(1, n_polar + 1) * math.pi / (n_polar + 1)
    b = 2.0 * np.arange(1, n_azimuth + 1) * math.pi / n_azimuth
    aa, bb = np.meshgrid(a, b, indexing="ij")
    pts = np.stack((np.sin(aa) * np.cos(bb), np.sin(aa) * np.sin(bb), np.cos(aa)), axis=-1)
    return radius * pts.reshape(-1, 3)


def receptor_layout(spec: Dict[str, Any], k: float, margin: int = 12) -> np.ndarray:
    """
    Receptor positions from the scene's `receptors` mapping.

    Layouts: ring, aperture (ring with 3100 positions unless given),
    sphere10 (10 x 10 latitude grid), sphere900 (30 x 30), sphere_grid
    (Gauss-Legendre grid for far-field extraction at wavenumber k).
    """
    layout = spec.get("layout", "ring")
    radius = float(spec.get("radius", 10.0))
    start = math.radians(float(spec.get("start_deg", -90.0)))
    count = int(spec.get("count", 100) or 100)
    if layout == "ring":
        return ring_receptors(count, radius, start)
    if layout == "aperture":
        return ring_receptors(count, radius, start, spec.get("aperture") or APERTURE_RING)
    if layout == "sphere10":
        return latitude_receptors(10, 10, radius)
    if layout == "sphere900":
        return latitude_receptors(30, 30, radius)
    if layout == "sphere_grid":
        return sphere_grid(radius, k, margin).points()
    raise ConfigError(f"unknown receptor layout '{layout}'")


# Scenes


def _load_truth(name: str) -> BandLimitedRadialCurve:
    if Path(name).is_file():
        return read_curve(name)
    try:
        return builtin_curve(name)
    except ValueError as e:
        raise ConfigError(str(e)) from None


@dataclass
class SceneConfig:
    """
    Everything needed to synthesize measurements.

    Attributes:
        truth: Generating curve of the obstacle
        frame: Axis frame placing the obstacle
        directions: Unit incident directions
        receptors: (M, 3) receptor positions
        wavenumbers: Wavenumbers to synthesize
        noise: Relative noise level
        seed: Seed of all random draws
        truth_name: Builtin name or coefficient file of the truth
    """
    truth: BandLimitedRadialCurve
    frame: AxisFrame
    directions: List[Tuple[float, float, float]]
    receptors: np.ndarray
    wavenumbers: Tuple[float, ...]
    noise: float = 0.02
    seed: int = 0
    truth_name: str = ""

    def __post_init__(self):
        self.truth.check_positive()
        if self.noise < 0:
            raise ConfigError("noise level must be non-negative")
        if not self.wavenumbers:
            raise ConfigError("scene has no wavenumbers")
        bound = self.truth.max_radius()
        dist = np.linalg.norm(self.receptors - self.frame.center, axis=1)
        if np.any(dist <= bound):
            raise ConfigError(
                f"receptors must lie outside the obstacle's bounding sphere (radius {bound:.3g})"
            )

    @classmethod
    def from_config(cls, config: Config, seed: Optional[int] = None) -> "SceneConfig":
        """
        Build the scene from the `scene` section.

        Wavenumbers default to the inversion schedule (kmin, kmax, kstep).

        Raises:
            ConfigError: On unknown names or an invalid scene
        """
        sc = config.get_section("scene")
        inv = config.get_section("inversion")
        fr = sc.get("frame") or {}
        frame = AxisFrame(
            polar=float(fr.get("polar", 0.0)),
            azimuth=float(fr.get("azimuth", 0.0)),
            center_xy=tuple(fr.get("center", (0.0, 0.0))),
        )
        if sc.get("wavenumbers"):
            ks = tuple(float(k) for k in sc["wavenumbers"])
        else:
            ks = frequency_schedule(float(inv["kmin"]), float(inv["kmax"]), float(inv["kstep"]))
        receptors = receptor_layout(
            sc.get("receptors") or {}, ks[0], config.get("farfield", "degree_margin")
        )
        return cls(
            truth=_load_truth(str(sc["truth"])),
            frame=frame,
            directions=direction_set(sc["directions"], config.get_section("axis")),
            receptors=receptors,
            wavenumbers=ks,
            noise=float(sc.get("noise", 0.0) or 0.0),
            seed=int(seed if seed is not None else sc.get("seed", 0)),
            truth_name=str(sc["truth"]),
        )

    def waves(self, k: float) -> List[IncidentWave]:
        return [IncidentWave(k, d) for d in self.directions]


# Synthetic data


def complex_normal(rng: np.random.Generator, n: int) -> np.ndarray:
    """Standard complex normal draws by the Box-Muller transform of uniform draws."""
    u1 = 1.0 - rng.random(n)
    u2 = rng.random(n)
    return np.sqrt(-np.log(u1)) * np.exp(2j * np.pi * u2)


def add_noise(values: np.ndarray, level: float, rng: np.random.Generator) -> np.ndarray:
    """values + level * |values| * eps / |eps| with one complex normal eps per call."""
    if level == 0.0:
        return values.copy()
    eps = complex_normal(rng, values.size)
    return values + level * np.abs(values) * eps / np.linalg.norm(eps)


def exact_data(scene: SceneConfig, config: Optional[Config] = None, threads: int = 1) -> MeasurementSet:
    """Noise-free forward data of the scene, one solver per wavenumber."""
    result = MeasurementSet(scene.receptors, scene.directions)
    for k in scene.wavenumbers:
        solver = ForwardSolver(scene.truth, k, config=config, threads=threads)
        meas = forward_operator(scene.truth, scene.frame, k, scene.waves(k), scene.receptors, solver=solver)
        for (kk, i), values in meas.entries.items():
            result.add(kk, i, values)
        logger.info("Forward data at k=%g for %d directions", k, len(scene.directions))
    return result


def synthesize(scene: SceneConfig, config: Optional[Config] = None, threads: int = 1) -> MeasurementSet:
    """
    Exact data plus seeded multiplicative noise, drawn block by block.

    With noise 0 the result equals the forward data exactly.
    """
    meas = exact_data(scene, config, threads)
    if scene.noise == 0.0:
        return meas
    rng = np.random.default_rng(scene.seed)
    for key in sorted(meas.entries):
        meas.entries[key] = add_noise(meas.entries[key], scene.noise, rng)
    meas.noise_meta = (scene.noise, scene.seed)
    return meas


# Reports


@dataclass
class RunReport:
    """
    Outcome of one harness run.

    The report file holds only deterministic content; wall-clock timings
    go to a separate file.
    """
    command: str
    seed: Optional[int]
    config: Dict[str, Any]
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "rows": self.rows,
            "summary": self.summary,
        }

    def write(self, out_dir: Path) -> Path:
        write_yaml(out_dir / "timings.yaml", {k: float(v) for k, v in self.timings.items()})
        return write_yaml(out_dir / f"report-{self.command}.yaml", _plain(self.to_dict()))


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _k_tag(k: float) -> str:
    return f"{k:g}".replace(".", "p")


# Subcommands


def run_forward(config: Config, out_dir: Path, threads: int = 1, write_farfields: bool = True) -> RunReport:
    """Exact forward data of the scene, plus world-frame far fields per (k, d)."""
    scene = SceneConfig.from_config(config)
    report = RunReport("forward", None, config.config)
    start = time.perf_counter()
    meas = exact_data(scene, config, threads)
    write_measurements(out_dir / "forward.txt", meas)
    if write_farfields:
        ffc = config.get_section("farfield")
        grid = angular_grid(ffc["n_theta"], ffc["n_phi"])
        for k in scene.wavenumbers:
            solver = ForwardSolver(scene.truth, k, config=config, threads=threads)
            for i, d in enumerate(scene.directions):
                ff = obstacle_farfield(solver, scene.frame, d, grid)
                write_farfield(out_dir / f"farfield_k{_k_tag(k)}_d{i}.txt", ff)
    report.rows = [{"k": k, "directions": len(scene.directions)} for k in scene.wavenumbers]
    report.summary = {"receptors": int(meas.receptor_count), "truth": scene.truth_name}
    report.timings["forward"] = time.perf_counter() - start
    report.write(out_dir)
    return report


def run_synth(config: Config, out_dir: Path, seed: Optional[int] = None, threads: int = 1) -> RunReport:
    """Noisy synthetic measurements of the scene."""
    scene = SceneConfig.from_config(config, seed)
    report = RunReport("synth", scene.seed, config.config)
    start = time.perf_counter()
    meas = synthesize(scene, config, threads)
    write_measurements(out_dir / "measurements.txt", meas)
    write_curve(out_dir / "truth.txt", scene.truth)
    report.rows = [{"k": k, "directions": len(scene.directions)} for k in scene.wavenumbers]
    report.summary = {"noise": scene.noise, "receptors": int(meas.receptor_count), "truth": scene.truth_name}
    report.timings["synth"] = time.perf_counter() - start
    report.write(out_dir)
    return report


def _measurements(out_dir: Path, path: Optional[str]) -> MeasurementSet:
    candidates = [Path(path)] if path else [out_dir / "measurements.txt", out_dir / "forward.txt"]
    for p in candidates:
        if p.is_file():
            return read_measurements(p)
    raise FileNotFoundError(f"measurement file not found: {candidates[0]}")


def run_find_axis(
    config: Config,
    out_dir: Path,
    measurements: Optional[str] = None,
    threads: int = 1,
) -> RunReport:
    """
    Axis orientation and centre from sphere measurements of the three axis-search waves.

    Noisy data relax the harmonic fit tolerance and the acceptance threshold
    to five times the noise level.
    """
    meas = _measurements(out_dir, measurements)
    k = float(config.get("axis", "wavenumber"))
    if k not in meas.wavenumbers:
        if len(meas.wavenumbers) != 1:
            raise ConfigError(f"measurements hold no block at axis wavenumber k={k:g}")
        k = meas.wavenumbers[0]
    noise = meas.noise_meta[0] if meas.noise_meta is not None else 0.0
    report = RunReport("find-axis", meas.noise_meta[1] if meas.noise_meta else None, config.config)
    start = time.perf_counter()
    result = find_axis(meas, k, config, noise=noise, threads=threads)
    write_axis_report(out_dir / "axis.txt", result)
    est = result.estimate
    report.summary = {
        "k": k,
        "azimuth": est.azimuth,
        "polar": est.polar,
        "center": list(est.center_xy),
        "orientation_score": result.orientation_score,
        "location_scores": list(result.location_scores),
        "accepted": result.accepted,
    }
    report.timings["find_axis"] = time.perf_counter() - start
    report.write(out_dir)
    return report


def _inversion_settings(config: Config, path: Optional[str]) -> InversionConfig:
    section = config.get_section("inversion")
    if path:
        return load_inversion_config(path, base=section)
    return inversion_config_from_mapping(section)


def _axis_frame(config: Config, out_dir: Path, axis_path: Optional[str]) -> AxisFrame:
    path = Path(axis_path) if axis_path else out_dir / "axis.txt"
    if axis_path or path.is_file():
        fields = read_axis_report(path)
        return AxisFrame(fields["phi_p"], fields["theta_p"], (fields["h1"], fields["h2"]))
    fr = config.get("scene", "frame") or {}
    return AxisFrame(fr.get("polar", 0.0), fr.get("azimuth", 0.0), tuple(fr.get("center", (0.0, 0.0))))


def _initial_curve(config: Config) -> BandLimitedRadialCurve:
    inv = config.get_section("inversion")
    if inv.get("initial_curve"):
        return read_curve(inv["initial_curve"])
    return BandLimitedRadialCurve.constant(float(inv.get("initial_radius", 1.0)))


def _truth_or_none(config: Config) -> Optional[BandLimitedRadialCurve]:
    name = config.get("scene", "truth")
    if not name:
        return None
    try:
        return _load_truth(str(name))
    except (ConfigError, OSError):
        return None


def run_invert(
    config: Config,
    out_dir: Path,
    measurements: Optional[str] = None,
    inversion_file: Optional[str] = None,
    axis_file: Optional[str] = None,
    threads: int = 1,
) -> RunReport:
    """
    Recursive linearization over the schedule.

    Writes one coefficient file and one trace per frequency. A failure at
    some frequency still writes everything reconstructed before it, then
    raises.
    """
    meas = _measurements(out_dir, measurements)
    cfg = _inversion_settings(config, inversion_file)
    frame = _axis_frame(config, out_dir, axis_file)
    truth = _truth_or_none(config)
    report = RunReport("invert", meas.noise_meta[1] if meas.noise_meta else None, config.config)
    start = time.perf_counter()

    def record(k, curve, trace):
        write_curve(out_dir / f"recon_k{_k_tag(k)}.txt", curve)
        write_trace(out_dir / f"trace_k{_k_tag(k)}.csv", trace)
        report.timings[f"k={k:g}"] = trace.seconds

    result = recursive_linearization(
        meas, _initial_curve(config), cfg, frame=frame, config=config, threads=threads, callback=record
    )
    done = dict(zip(result.wavenumbers, zip(result.curves, result.traces)))
    for k in cfg.schedule:
        row: Dict[str, Any] = {"k": k, "band_limit": cfg.band_limit(k)}
        if k in done:
            curve, trace = done[k]
            row.update(
                status="ok",
                iterations=trace.accepted_iterations,
                residual=trace.final_residual,
                stop_reason=trace.stop_reason,
            )
            if truth is not None:
                row["profile_error"] = profile_error(truth, curve)
                row["hausdorff"] = hausdorff_distance(truth, curve)
        else:
            row["status"] = "failed" if k == result.failed_at else "skipped"
        report.rows.append(row)
    report.summary = {"completed": result.completed, "frame": [frame.polar, frame.azimuth, *frame.center_xy]}
    if result.final is not None:
        write_curve(out_dir / "recon_final.txt", result.final)
    report.timings["invert"] = time.perf_counter() - start
    report.write(out_dir)
    if not result.completed:
        raise AxiscatError(f"reconstruction stopped at k={result.failed_at:g}: {result.error}")
    return report


def sphere_model(meas: MeasurementSet, k: float, frame: AxisFrame = AxisFrame()) -> Callable[[float], np.ndarray]:
    """Stacked sphere-series prediction at the receptors for a sphere of radius p0."""
    idx = sorted(i for kk, i in meas.entries if kk == float(k))
    centre = frame.center
    local = meas.receptors - centre

    def model(p0: float) -> np.ndarray:
        sol = sphere_series(k, p0)
        return np.concatenate([
            np.exp(1j * k * np.dot(meas.directions[i], centre))
            * sphere_scattered_field(sol, meas.directions[i], local)
            for i in idx
        ])
    return model


def run_scan(config: Config, out_dir: Path, measurements: Optional[str] = None) -> RunReport:
    """Objective scan over constant profiles at every measured wavenumber."""
    meas = _measurements(out_dir, measurements)
    frame = _axis_frame(config, out_dir, None)
    report = RunReport("scan", meas.noise_meta[1] if meas.noise_meta else None, config.config)
    start = time.perf_counter()
    for k in meas.wavenumbers:
        scan = objective_scan(meas, k, model=sphere_model(meas, k, frame))
        write_table(out_dir / f"scan_k{_k_tag(k)}.csv", ("radius", "objective"), np.column_stack((scan.radii, scan.values)))
        report.rows.append({"k": k, "a": scan.bracket[0], "b": scan.bracket[1]})
    report.timings["scan"] = time.perf_counter() - start
    report.write(out_dir)
    return report


def run_plot(config: Config, out_dir: Path) -> List[Path]:
    """Cross-section and scan figures from the files of earlier runs."""
    from .plots import emit_plots

    truth = _truth_or_none(config)
    recons = {}
    for path in sorted(out_dir.glob("recon_k*.txt")):
        k = float(path.stem[len("recon_k"):].replace("p", "."))
        recons[k] = read_curve(path)
    wanted = config.get("output", "plot_wavenumbers")
    if wanted:
        recons = {k: c for k, c in recons.items() if any(math.isclose(k, w) for w in wanted)}
    scans = {}
    for path in sorted(out_dir.glob("scan_k*.csv")):
        k = float(path.stem[len("scan_k"):].replace("p", "."))
        _, table = read_table(path)
        scans[k] = table
    return emit_plots(out_dir, truth, dict(sorted(recons.items())), scans, config.get("output", "cross_section_samples"))


@dataclass
class BenchmarkRow:
    k: float
    nodes: int
    modes: int
    assemble: float
    factor: float
    solve: float

    @property
    def total(self) -> float:
        return self.assemble + self.factor + self.solve

    @property
    def solve_share(self) -> float:
        """Solve time per factorization time; reused factorizations keep this small."""
        return self.solve / self.factor if self.factor > 0 else float("nan")


def bench_config(config: Optional[Config] = None) -> Config:
    """Copy of config with the forward panel sizing of the bench section."""
    bench = Config()
    if config is not None:
        bench.config = copy.deepcopy(config.config)
    section = bench.get_section("bench")
    for key in ("points_per_wavelength", "min_panels"):
        if section.get(key) is not None:
            bench.set("forward", key, section[key])
    return bench


def _fit_exponent(wavenumbers: Sequence[float], times: Sequence[float]) -> float:
    if len(times) < 2 or min(times) <= 0:
        return float("nan")
    return float(np.polyfit(np.log(wavenumbers), np.log(times), 1)[0])


def benchmark(
    curve: Optional[BandLimitedRadialCurve] = None,
    wavenumbers: Sequence[float] = BENCH_WAVENUMBERS,
    directions: Sequence[Sequence[float]] = ((0.0, 0.0, 1.0),),
    config: Optional[Config] = None,
    threads: int = 1,
) -> Tuple[List[BenchmarkRow], Dict[str, float]]:
    """
    Time assembly, factorization and solve of the forward solver.

    The runs use the panel sizing of the bench section, so the node count
    grows linearly in k instead of sitting at the min_panels floor.

    Returns:
        (rows, fitted exponents of the total and of the factorization time against k)
    """
    curve = curve if curve is not None else BandLimitedRadialCurve.constant(1.0)
    config = bench_config(config)
    rows = []
    for k in wavenumbers:
        solver = ForwardSolver(curve, k, config=config, threads=threads)
        solver.solve([IncidentWave.towards(k, d) for d in directions])
        t = solver.timings
        rows.append(BenchmarkRow(k, solver.disc.node_count, solver.m_max + 1, t["assemble"], t["factor"], t["solve"]))
        logger.info("k=%g: %d nodes, %d modes, %.3fs", k, rows[-1].nodes, rows[-1].modes, rows[-1].total)
    exponents = {
        "total": _fit_exponent(wavenumbers, [r.total for r in rows]),
        "factor": _fit_exponent(wavenumbers, [r.factor for r in rows]),
    }
    return rows, exponents


def run_bench(config: Config, out_dir: Path, threads: int = 1) -> RunReport:
    scene = SceneConfig.from_config(config)
    wavenumbers = tuple(config.get_section("bench").get("wavenumbers") or BENCH_WAVENUMBERS)
    rows, exponents = benchmark(scene.truth, wavenumbers, scene.directions, config, threads)
    write_table(
        out_dir / "bench.csv",
        ("k", "nodes", "modes", "assemble", "factor", "solve", "total", "solve_share"),
        [(r.k, r.nodes, r.modes, r.assemble, r.factor, r.solve, r.total, r.solve_share) for r in rows],
    )
    report = RunReport("bench", None, config.config)
    report.rows = [{"k": r.k, "nodes": r.nodes, "modes": r.modes} for r in rows]
    report.timings = {
        "exponent": exponents["total"],
        "exponent_factor": exponents["factor"],
        **{f"k={r.k:g}": r.total for r in rows},
        **{f"solve_share_k={r.k:g}": r.solve_share for r in rows},
    }
    report.write(out_dir)
    return report
