"""
Text file formats read and written by the command-line tools.

All writers go through `atomic_write`, so a crashed run never leaves a
truncated file behind. Floats are written with 17 significant digits and
every format round-trips through its reader without loss.
"""

import csv
import io
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import yaml

from .axis import SymmetryReport
from .curves import BandLimitedRadialCurve
from .errors import FileFormatError, InvalidCurveError, ShapeMismatchError
from .farfield import CONVENTION, FarFieldGrid
from .forward import MeasurementSet
from .inversion import GaussNewtonTrace

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

AXIS_FIELDS = ("theta_p", "phi_p", "h1", "h2", "score_orient", "score_h1", "score_h2")
TRACE_FIELDS = ("iter", "residual", "step_norm", "accepted", "reason")


def _fmt(x: float) -> str:
    return repr(float(x))


def atomic_write(path: PathLike, text: str) -> Path:
    """Write text to a temporary sibling file and rename it over `path`."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.debug("Wrote %s", path)
    return path


def _lines(path: PathLike) -> Iterator[Tuple[int, str]]:
    """Non-blank lines with their 1-based numbers; '#' comment lines are kept."""
    with open(path, "r") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def _header_value(path, lineno: int, line: str, key: str) -> str:
    prefix = f"{key}="
    if not line.startswith(prefix):
        raise FileFormatError(path, lineno, f"expected '{prefix}...', got '{line}'")
    return line[len(prefix):].strip()


def _floats(path, lineno: int, text: str, count: int) -> List[float]:
    parts = text.split()
    if len(parts) != count:
        raise FileFormatError(path, lineno, f"expected {count} numbers, got {len(parts)}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise FileFormatError(path, lineno, f"non-numeric value in '{text}'") from None


# Curve coefficients


def format_curve(curve: BandLimitedRadialCurve) -> str:
    rows = [f"nmodes={curve.band_limit}", f"0 {_fmt(curve.p0)} 0.0"]
    for j, (pc, ps) in enumerate(zip(curve.cos_coeffs, curve.sin_coeffs), start=1):
        rows.append(f"{j} {_fmt(pc)} {_fmt(ps)}")
    return "\n".join(rows) + "\n"


def write_curve(path: PathLike, curve: BandLimitedRadialCurve) -> Path:
    return atomic_write(path, format_curve(curve))


def read_curve(path: PathLike) -> BandLimitedRadialCurve:
    """
    Read a coefficient file: `nmodes=<N_p>` then rows `j pc ps`.

    The j=0 row carries p0; its ps column is ignored. Missing rows are zero.

    Raises:
        FileFormatError: On malformed content, with the offending line number
    """
    lines = [(n, l) for n, l in _lines(path) if not l.startswith("#")]
    if not lines:
        raise FileFormatError(path, 1, "empty coefficient file")
    lineno, head = lines[0]
    try:
        n_p = int(_header_value(path, lineno, head, "nmodes"))
    except ValueError:
        raise FileFormatError(path, lineno, f"bad mode count in '{head}'") from None
    if n_p < 0:
        raise FileFormatError(path, lineno, "nmodes must be non-negative")
    p0 = None
    pc, ps = np.zeros(n_p), np.zeros(n_p)
    seen = set()
    for lineno, line in lines[1:]:
        j, c, s = _floats(path, lineno, line, 3)
        if j != int(j) or not 0 <= j <= n_p:
            raise FileFormatError(path, lineno, f"mode index {j:g} outside 0..{n_p}")
        j = int(j)
        if j in seen:
            raise FileFormatError(path, lineno, f"duplicate mode index {j}")
        seen.add(j)
        if j == 0:
            p0 = c
        else:
            pc[j - 1], ps[j - 1] = c, s
    if p0 is None:
        raise FileFormatError(path, lines[0][0], "missing j=0 row with p0")
    try:
        return BandLimitedRadialCurve(p0, tuple(pc), tuple(ps))
    except InvalidCurveError as e:
        raise FileFormatError(path, lines[0][0], str(e)) from e


# Measurements


def format_measurements(meas: MeasurementSet) -> str:
    buf = io.StringIO()
    if meas.noise_meta is not None:
        level, seed = meas.noise_meta
        buf.write(f"# noise={_fmt(level)} seed={int(seed)}\n")
    for (k, idx) in sorted(meas.entries):
        d = meas.directions[idx]
        values = meas.entries[(k, idx)]
        buf.write(f"k={_fmt(k)}\n")
        buf.write(f"d={_fmt(d[0])} {_fmt(d[1])} {_fmt(d[2])}\n")
        buf.write(f"nrec={meas.receptor_count}\n")
        for (x, y, z), v in zip(meas.receptors, values):
            buf.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)} {_fmt(v.real)} {_fmt(v.imag)}\n")
    return buf.getvalue()


def write_measurements(path: PathLike, meas: MeasurementSet) -> Path:
    return atomic_write(path, format_measurements(meas))


def _parse_meta(line: str) -> Optional[Tuple[float, int]]:
    fields = dict(part.split("=", 1) for part in line.lstrip("#").split() if "=" in part)
    if "noise" in fields and "seed" in fields:
        return float(fields["noise"]), int(fields["seed"])
    return None


def read_measurements(path: PathLike) -> MeasurementSet:
    """
    Read a measurement file of one or more (k, d) blocks.

    Directions are indexed in order of first appearance. Every block must
    list the same receptors.

    Raises:
        FileFormatError: On malformed content or inconsistent receptors
    """
    meta = None
    lines = []
    for lineno, line in _lines(path):
        if line.startswith("#"):
            meta = _parse_meta(line) or meta
        else:
            lines.append((lineno, line))
    if not lines:
        raise FileFormatError(path, 1, "no measurement blocks")

    directions: List[Tuple[float, float, float]] = []
    receptors = None
    blocks: Dict[Tuple[float, int], np.ndarray] = {}
    pos = 0
    while pos < len(lines):
        if pos + 3 > len(lines):
            raise FileFormatError(path, lines[pos][0], "truncated block header")
        (lk, hk), (ld, hd), (ln, hn) = lines[pos:pos + 3]
        try:
            k = float(_header_value(path, lk, hk, "k"))
        except ValueError:
            raise FileFormatError(path, lk, f"bad wavenumber in '{hk}'") from None
        d = tuple(_floats(path, ld, _header_value(path, ld, hd, "d"), 3))
        try:
            nrec = int(_header_value(path, ln, hn, "nrec"))
        except ValueError:
            raise FileFormatError(path, ln, f"bad receptor count in '{hn}'") from None
        rows = lines[pos + 3:pos + 3 + nrec]
        if len(rows) != nrec:
            raise FileFormatError(path, ln, f"block announces {nrec} receptors, found {len(rows)}")
        data = np.array([_floats(path, n, l, 5) for n, l in rows]).reshape(nrec, 5)
        if receptors is None:
            receptors = data[:, :3]
        elif receptors.shape != data[:, :3].shape or not np.array_equal(receptors, data[:, :3]):
            raise FileFormatError(path, lk, "block receptors differ from the first block")
        if d not in directions:
            directions.append(d)
        key = (k, directions.index(d))
        if key in blocks:
            raise FileFormatError(path, lk, f"duplicate block for k={k:g}, d={d}")
        blocks[key] = data[:, 3] + 1j * data[:, 4]
        pos += 3 + nrec
    try:
        return MeasurementSet(receptors, directions, blocks, meta)
    except ShapeMismatchError as e:
        raise FileFormatError(path, 1, str(e)) from e


# Far fields


def format_farfield(ff: FarFieldGrid) -> str:
    d = ff.direction
    buf = io.StringIO()
    buf.write(
        f"k={_fmt(ff.k)} d={_fmt(d[0])} {_fmt(d[1])} {_fmt(d[2])} "
        f"ntheta={ff.thetas.size} nphi={ff.phis.size} convention={CONVENTION}\n"
    )
    for i, theta in enumerate(ff.thetas):
        for j, phi in enumerate(ff.phis):
            v = ff.values[i, j]
            buf.write(f"{_fmt(theta)} {_fmt(phi)} {_fmt(v.real)} {_fmt(v.imag)}\n")
    return buf.getvalue()


def write_farfield(path: PathLike, ff: FarFieldGrid) -> Path:
    return atomic_write(path, format_farfield(ff))


def read_farfield(path: PathLike) -> FarFieldGrid:
    """
    Read a far-field file written by `write_farfield`.

    Raises:
        FileFormatError: On a malformed header, a foreign convention or a
            row count that does not match the grid
    """
    lines = list(_lines(path))
    if not lines:
        raise FileFormatError(path, 1, "empty far-field file")
    lineno, head = lines[0]
    tokens = head.split()
    try:
        k = float(_header_value(path, lineno, tokens[0], "k"))
        d = (float(_header_value(path, lineno, tokens[1], "d")), float(tokens[2]), float(tokens[3]))
        fields = dict(t.split("=", 1) for t in tokens[4:])
        n_theta, n_phi = int(fields["ntheta"]), int(fields["nphi"])
        convention = fields["convention"]
    except (IndexError, KeyError, ValueError):
        raise FileFormatError(path, lineno, f"malformed far-field header '{head}'") from None
    if convention != CONVENTION:
        raise FileFormatError(path, lineno, f"unsupported convention '{convention}'")
    rows = lines[1:]
    if len(rows) != n_theta * n_phi:
        raise FileFormatError(path, lineno, f"expected {n_theta * n_phi} rows, found {len(rows)}")
    data = np.array([_floats(path, n, l, 4) for n, l in rows]).reshape(n_theta, n_phi, 4)
    return FarFieldGrid(data[:, 0, 0], data[0, :, 1], data[..., 2] + 1j * data[..., 3], k, d)


# Axis report


def format_axis_report(report: SymmetryReport) -> str:
    est = report.estimate
    values = (
        est.azimuth, est.polar, est.center_xy[0], est.center_xy[1],
        report.orientation_score, report.location_scores[0], report.location_scores[1],
    )
    return " ".join(AXIS_FIELDS) + "\n" + " ".join(_fmt(v) for v in values) + "\n"


def write_axis_report(path: PathLike, report: SymmetryReport) -> Path:
    return atomic_write(path, format_axis_report(report))


def read_axis_report(path: PathLike) -> Dict[str, float]:
    lines = list(_lines(path))
    if len(lines) != 2 or tuple(lines[0][1].split()) != AXIS_FIELDS:
        raise FileFormatError(path, 1, f"expected header '{' '.join(AXIS_FIELDS)}' and one value row")
    values = _floats(path, lines[1][0], lines[1][1], len(AXIS_FIELDS))
    return dict(zip(AXIS_FIELDS, values))


# Gauss-Newton traces


def format_trace(trace: GaussNewtonTrace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_FIELDS)
    for rec in trace.records:
        writer.writerow(
            (rec.iteration, _fmt(rec.residual), _fmt(rec.step_norm), int(rec.accepted), rec.reason)
        )
    return buf.getvalue()


def write_trace(path: PathLike, trace: GaussNewtonTrace) -> Path:
    return atomic_write(path, format_trace(trace))


def read_trace(path: PathLike) -> List[Dict[str, object]]:
    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != TRACE_FIELDS:
            raise FileFormatError(path, 1, f"expected columns {','.join(TRACE_FIELDS)}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({
                    "iter": int(row["iter"]),
                    "residual": float(row["residual"]),
                    "step_norm": float(row["step_norm"]),
                    "accepted": bool(int(row["accepted"])),
                    "reason": row["reason"],
                })
            except (TypeError, ValueError):
                raise FileFormatError(path, lineno, "malformed trace row") from None
    return rows


# Tables and reports


def format_table(header: Sequence[str], rows: Sequence[Sequence[float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_table(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[float]]) -> Path:
    return atomic_write(path, format_table(header, rows))


def read_table(path: PathLike) -> Tuple[List[str], np.ndarray]:
    with open(path, "r", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            raise FileFormatError(path, 1, "empty table")
        try:
            rows = [[float(v) for v in row] for row in reader if row]
        except ValueError:
            raise FileFormatError(path, 2, "non-numeric table entry") from None
    return header, np.array(rows).reshape(len(rows), len(header))


def write_yaml(path: PathLike, payload: dict) -> Path:
    return atomic_write(path, yaml.safe_dump(payload, sort_keys=True, default_flow_style=False))


def read_yaml(path: PathLike) -> dict:
    with open(path, "r") as f:
        return yaml.safe_load(f) or {}
