"""Tests for the text file formats."""

import numpy as np
import pytest

from axiscat.axis import SymmetryReport
from axiscat.curves import AxisFrame, BandLimitedRadialCurve
from axiscat.errors import FileFormatError
from axiscat.farfield import FarFieldGrid, angular_grid
from axiscat.fileio import (
    read_axis_report,
    read_curve,
    read_farfield,
    read_measurements,
    read_table,
    read_trace,
    read_yaml,
    write_axis_report,
    write_curve,
    write_farfield,
    write_measurements,
    write_table,
    write_trace,
    write_yaml,
)
from axiscat.forward import MeasurementSet
from axiscat.inversion import GaussNewtonTrace, IterationRecord


def _write(path, text):
    path.write_text(text)
    return path


def test_curve_file(tmp_path, star8):
    """Test the coefficient format, including exact float recovery."""
    curve = BandLimitedRadialCurve(1.0 / 3.0, (0.1, 0.0), (0.0, -2e-17))
    assert read_curve(write_curve(tmp_path / "c.txt", curve)) == curve
    assert read_curve(write_curve(tmp_path / "s.txt", star8)) == star8


def test_curve_file_missing_rows_are_zero(tmp_path):
    """Test that omitted modes read as zero and comments are skipped."""
    path = _write(tmp_path / "c.txt", "# sphere with a dent\nnmodes=3\n0 1.5 0\n2 0.1 -0.2\n")
    curve = read_curve(path)

    assert curve.band_limit == 3
    assert curve.cos_coeffs == (0.0, 0.1, 0.0)
    assert curve.sin_coeffs == (0.0, -0.2, 0.0)


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("modes=2\n0 1 0\n", 1),
        ("nmodes=2\n0 1 0\n3 0.1 0.1\n", 3),
        ("nmodes=2\n0 1 0\n1 0.1\n", 3),
        ("nmodes=2\n0 1 0\n\n1 x 0\n", 4),
        ("nmodes=1\n1 0.1 0\n", 1),
        ("nmodes=1\n0 1 0\n0 2 0\n", 3),
    ],
)
def test_curve_file_errors(tmp_path, text, line):
    """Test that malformed coefficient files name the offending line."""
    path = _write(tmp_path / "bad.txt", text)
    with pytest.raises(FileFormatError) as excinfo:
        read_curve(path)
    assert excinfo.value.line == line
    assert f":{line}:" in str(excinfo.value)


def test_measurement_file(tmp_path):
    """Test blocks, direction indexing and the noise header."""
    rng = np.random.default_rng(0)
    receptors = rng.normal(size=(4, 3))
    meas = MeasurementSet(receptors, [(0.0, 0.0, 1.0), (0.6, 0.0, 0.8)], noise_meta=(0.02, 7))
    for k in (0.5, 1.0):
        for i in range(2):
            meas.add(k, i, rng.normal(size=4) + 1j * rng.normal(size=4))

    back = read_measurements(write_measurements(tmp_path / "m.txt", meas))

    assert back.noise_meta == (0.02, 7)
    assert back.directions == meas.directions
    assert np.array_equal(back.receptors, meas.receptors)
    assert sorted(back.entries) == sorted(meas.entries)
    for key, values in meas.entries.items():
        assert np.array_equal(back.entries[key], values)


def test_measurement_file_errors(tmp_path):
    """Test truncated blocks and inconsistent receptors."""
    short = _write(tmp_path / "short.txt", "k=1.0\nd=0 0 1\nnrec=2\n1 0 0 0.5 0.5\n")
    with pytest.raises(FileFormatError) as excinfo:
        read_measurements(short)
    assert excinfo.value.line == 3

    moved = _write(
        tmp_path / "moved.txt",
        "k=1.0\nd=0 0 1\nnrec=1\n1 0 0 0.5 0.5\nk=2.0\nd=0 0 1\nnrec=1\n2 0 0 0.5 0.5\n",
    )
    with pytest.raises(FileFormatError) as excinfo:
        read_measurements(moved)
    assert excinfo.value.line == 5

    with pytest.raises(FileFormatError):
        read_measurements(_write(tmp_path / "empty.txt", "# nothing\n"))


def test_farfield_file(tmp_path):
    """Test the far-field grid format and its convention tag."""
    thetas, phis = angular_grid(6, 4)
    values = np.outer(np.cos(thetas), phis) + 1j * np.outer(thetas, np.sin(phis))
    ff = FarFieldGrid(thetas, phis, values, 2.5, (0.0, 0.6, 0.8))

    back = read_farfield(write_farfield(tmp_path / "ff.txt", ff))

    assert np.array_equal(back.values, values)
    assert np.array_equal(back.thetas, thetas)
    assert back.k == 2.5
    assert back.direction == (0.0, 0.6, 0.8)

    text = (tmp_path / "ff.txt").read_text().replace("convention=green-4pi", "convention=unit")
    with pytest.raises(FileFormatError):
        read_farfield(_write(tmp_path / "other.txt", text))


def test_axis_report_file(tmp_path):
    """Test the one-row axis report."""
    report = SymmetryReport(
        estimate=AxisFrame(polar=0.5, azimuth=1.0, center_xy=(2.0, -1.0)),
        orientation_score=1e-4,
        location_scores=(2e-5, 3e-5),
        grid_resolution=(0.06, 0.03, 1e-3),
    )
    values = read_axis_report(write_axis_report(tmp_path / "axis.txt", report))

    assert values == {
        "theta_p": 1.0, "phi_p": 0.5, "h1": 2.0, "h2": -1.0,
        "score_orient": 1e-4, "score_h1": 2e-5, "score_h2": 3e-5,
    }
    with pytest.raises(FileFormatError):
        read_axis_report(_write(tmp_path / "bad.txt", "theta_p phi_p\n1 2\n"))


def test_trace_file(tmp_path):
    """Test the Gauss-Newton trace table."""
    trace = GaussNewtonTrace(1.5, 3, [
        IterationRecord(0, 0.4, 0.0, 0.0, True),
        IterationRecord(1, 0.1, 0.25, 0.1, True),
        IterationRecord(2, 0.2, 0.05, 0.1, False, "residual_increase"),
    ])
    rows = read_trace(write_trace(tmp_path / "trace.csv", trace))

    assert [r["iter"] for r in rows] == [0, 1, 2]
    assert rows[1]["residual"] == 0.1
    assert rows[2]["accepted"] is False
    assert rows[2]["reason"] == "residual_increase"

    with pytest.raises(FileFormatError):
        read_trace(_write(tmp_path / "bad.csv", "iter,residual\n0,1\n"))


def test_table_and_yaml(tmp_path):
    """Test numeric tables and YAML reports."""
    header, table = read_table(write_table(tmp_path / "t.csv", ("radius", "objective"), [(0.5, 1.25), (1.0, 0.0)]))
    assert header == ["radius", "objective"]
    assert table.shape == (2, 2)
    assert table[0, 1] == 1.25

    with pytest.raises(FileFormatError):
        read_table(_write(tmp_path / "bad.csv", "a,b\n1,x\n"))

    payload = {"command": "synth", "rows": [{"k": 1.0}], "seed": 3}
    assert read_yaml(write_yaml(tmp_path / "r.yaml", payload)) == payload


def test_writes_leave_no_temporary_files(tmp_path, star8):
    """Test that atomic writes clean up after themselves."""
    write_curve(tmp_path / "c.txt", star8)
    write_curve(tmp_path / "c.txt", star8)

    assert [p.name for p in tmp_path.iterdir()] == ["c.txt"]
