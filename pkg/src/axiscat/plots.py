"""
Figures of reconstructions and objective scans.

Figures are SVG files drawn with matplotlib's Agg backend; the plotted
polylines are also written as CSV so the numbers stay available without
parsing the SVG. Every line carries a gid, so the SVG groups can be found
by id.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .curves import BandLimitedRadialCurve, cross_section  # noqa: E402
from .fileio import write_table  # noqa: E402
from .inversion import local_maxima_bracket  # noqa: E402

logger = logging.getLogger(__name__)

matplotlib.rcParams["svg.hashsalt"] = "axiscat"
_SVG_METADATA = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp")
    fig.savefig(tmp, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
    tmp.replace(path)
    logger.debug("Wrote %s", path)
    return path


def plot_cross_sections(
    out_dir: Path,
    truth: Optional[BandLimitedRadialCurve],
    recons: Dict[float, BandLimitedRadialCurve],
    samples: int = 1024,
) -> List[Path]:
    """
    Overlay of the truth and reconstruction cross-sections in the x-z plane.

    Writes cross_sections.svg and cross_sections.csv (columns k, x, z; the
    truth has k = 0).
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    rows = []
    if truth is not None:
        xs = cross_section(truth, samples)
        ax.plot(xs[:, 0], xs[:, 1], "k-", lw=2.0, label="truth", gid="truth")
        rows.extend((0.0, x, z) for x, z in xs)
    for k, curve in recons.items():
        xs = cross_section(curve, samples)
        ax.plot(xs[:, 0], xs[:, 1], "--", lw=1.2, label=f"k = {k:g}", gid=f"recon-k{k:g}")
        rows.extend((float(k), x, z) for x, z in xs)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    ax.grid(alpha=0.3)
    if truth is not None or recons:
        ax.legend(loc="upper right", fontsize="small")
    svg = _save(fig, out_dir / "cross_sections.svg")
    csv = write_table(out_dir / "cross_sections.csv", ("k", "x", "z"), rows)
    return [svg, csv]


def plot_scan(out_dir: Path, k: float, radii: np.ndarray, values: np.ndarray, center: float = 1.0) -> List[Path]:
    """Objective curve with the bracketing local maxima marked."""
    a, b = local_maxima_bracket(radii, values, center)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(radii, values, "b-", lw=1.0, gid="objective")
    for x, name in ((a, "a"), (b, "b")):
        y = float(np.interp(x, radii, values))
        ax.plot([x], [y], "ro", gid=f"bracket-{name}")
        ax.annotate(f"{name} = {x:.2f}", (x, y), textcoords="offset points", xytext=(4, 6), fontsize="small")
    ax.set_xlabel("p0")
    ax.set_ylabel("objective")
    ax.set_title(f"k = {k:g}")
    ax.grid(alpha=0.3)
    tag = f"{k:g}".replace(".", "p")
    svg = _save(fig, out_dir / f"scan_k{tag}.svg")
    return [svg]


def emit_plots(
    out_dir: Path,
    truth: Optional[BandLimitedRadialCurve],
    recons: Dict[float, BandLimitedRadialCurve],
    scans: Optional[Dict[float, np.ndarray]] = None,
    samples: int = 1024,
) -> List[Path]:
    """
    All figures of a run directory.

    Args:
        out_dir: Output directory
        truth: Truth curve, if known
        recons: Reconstructions by wavenumber
        scans: (n, 2) tables of (radius, objective) by wavenumber

    Returns:
        Paths written
    """
    out_dir = Path(out_dir)
    paths = plot_cross_sections(out_dir, truth, recons, samples)
    for k, table in (scans or {}).items():
        paths.extend(plot_scan(out_dir, k, table[:, 0], table[:, 1]))
    logger.info("Wrote %d plot files to %s", len(paths), out_dir)
    return paths
