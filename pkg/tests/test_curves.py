"""Tests for generating curves, panels and axis frames."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axiscat.curves import (
    AxisFrame,
    BandLimitedRadialCurve,
    axis_frame_to_world,
    build_panels,
    builtin_curve,
    cross_section,
    curve_frame,
    direction_to_axis_frame,
    ellipsoid_curve,
    eval_curve_frame,
    eval_radial,
    eval_radial_derivative,
    fourier_fit,
    star_curve,
    world_to_axis_frame,
)
from axiscat.errors import DegenerateFrameError, InvalidCurveError, PanelLimitError


def test_eval_radial_examples(unit_sphere, star8):
    """Test radial profile values at known parameters."""
    assert abs(eval_radial(unit_sphere, 0.3) - 1.0) < 1e-15
    assert abs(eval_radial(star8, 0.5) - 1.8) < 1e-14
    assert abs(eval_radial(star8, 0.0) - 1.8) < 1e-12

    sine = BandLimitedRadialCurve(0.5, (0.0,), (0.5,))
    assert abs(eval_radial(sine, 0.75) - 1.0) < 1e-14
    assert abs(eval_radial(sine, 0.25)) < 1e-14


def test_eval_radial_rejects_out_of_range(unit_sphere):
    """Test that parameters outside [0, 1] are rejected."""
    with pytest.raises(ValueError):
        eval_radial(unit_sphere, 1.5)
    with pytest.raises(ValueError):
        eval_radial(unit_sphere, np.array([0.2, -0.1]))


def test_mismatched_coefficients():
    """Test that cosine and sine sequences must match."""
    with pytest.raises(InvalidCurveError):
        BandLimitedRadialCurve(1.0, (0.1, 0.2), (0.1,))
    with pytest.raises(InvalidCurveError):
        BandLimitedRadialCurve(float("nan"))


def test_sphere_frame(unit_sphere):
    """Test the frame of the unit sphere at the equator and the south pole."""
    eq = eval_curve_frame(unit_sphere, 0.5)
    assert abs(eq.r - 1.0) < 1e-15
    assert abs(eq.z) < 1e-15
    assert abs(eq.jacobian - np.pi) < 1e-14
    assert abs(eq.normal[0] - 1.0) < 1e-14
    assert abs(eq.normal[1]) < 1e-14

    south = eval_curve_frame(unit_sphere, 0.0)
    assert south.r == 0.0
    assert abs(south.z + 1.0) < 1e-15
    assert abs(south.normal[0]) < 1e-14
    assert abs(south.normal[1] + 1.0) < 1e-14


def test_degenerate_frame():
    """Test that a vanishing profile has no frame."""
    with pytest.raises(DegenerateFrameError):
        curve_frame(BandLimitedRadialCurve(0.0), [0.5])


@settings(max_examples=50, deadline=None)
@given(
    t=st.floats(min_value=0.0, max_value=1.0),
    p0=st.floats(min_value=0.8, max_value=2.0),
    a=st.floats(min_value=-0.3, max_value=0.3),
    b=st.floats(min_value=-0.3, max_value=0.3),
)
def test_frame_properties(t, p0, a, b):
    """Test position, jacobian and normal identities on random curves."""
    curve = BandLimitedRadialCurve(p0, (a, 0.0, 0.1), (0.0, b, 0.0))
    f = curve_frame(curve, [t])
    p = eval_radial(curve, t)
    angle = np.pi * (t - 0.5)

    assert abs(f.r[0] - p * np.cos(angle)) < 1e-12
    assert abs(f.z[0] - p * np.sin(angle)) < 1e-12
    assert abs(f.jacobian[0] - np.hypot(f.dr_dt[0], f.dz_dt[0])) < 1e-12
    assert abs(np.hypot(f.nr[0], f.nz[0]) - 1.0) < 1e-12
    assert abs(f.nr[0] * f.dr_dt[0] + f.nz[0] * f.dz_dt[0]) < 1e-10


def test_frame_derivatives_match_differences(star8):
    """Test analytic derivatives against central differences."""
    t = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    f = curve_frame(star8, t)
    plus = curve_frame(star8, t + h)
    minus = curve_frame(star8, t - h)

    assert np.max(np.abs((plus.r - minus.r) / (2 * h) - f.dr_dt)) < 1e-6
    assert np.max(np.abs((plus.z - minus.z) / (2 * h) - f.dz_dt)) < 1e-6
    dp = (eval_radial(star8, t + h) - eval_radial(star8, t - h)) / (2 * h)
    assert np.max(np.abs(dp - eval_radial_derivative(star8, t))) < 1e-6


def test_sphere_arclength(unit_sphere):
    """Test that the quadrature reproduces the half-circle length."""
    disc = build_panels(unit_sphere, 1.0)

    assert disc.node_count == 16 * disc.panel_count
    assert abs(disc.arclength_weights.sum() - np.pi) < 1e-13


def test_panel_size_bound(star8):
    """Test that no panel exceeds 16/ppw wavelengths."""
    k = 5.0
    disc = build_panels(star8, k, ppw=12.0)
    bound = (2 * np.pi / k) * (16 / 12.0)

    assert np.all(disc.panel_lengths <= bound * (1 + 1e-12))
    assert np.all(np.diff(disc.panel_bounds, axis=1) <= 1.33 / star8.band_limit + 1e-15)


def test_panels_tile_parameter_interval(star8):
    """Test that panels cover [0, 1] without gaps or overlaps."""
    bounds = build_panels(star8, 3.0).panel_bounds

    assert bounds[0, 0] == 0.0
    assert bounds[-1, 1] == 1.0
    assert np.all(bounds[1:, 0] == bounds[:-1, 1])


def test_panel_count_monotone_in_k(star8):
    """Test that raising k never reduces the panel count."""
    counts = [build_panels(star8, k).panel_count for k in (1.0, 2.0, 4.0, 8.0, 16.0)]

    assert counts == sorted(counts)
    assert counts[0] >= 8


def test_build_panels_errors(star8):
    """Test the refusal paths of the panel builder."""
    with pytest.raises(PanelLimitError):
        build_panels(star8, 200.0, max_panels=16)
    with pytest.raises(ValueError):
        build_panels(star8, 0.0)
    with pytest.raises(ValueError):
        build_panels(star8, 1.0, ppw=8.0)
    with pytest.raises(InvalidCurveError):
        build_panels(star_curve(0.2, 0.3, 8), 1.0)


def test_band_limit_padding(star8):
    """Test zero padding, truncation and addition of coefficient vectors."""
    padded = star8.with_band_limit(12)
    assert padded.band_limit == 12
    assert np.allclose(eval_radial(padded, np.linspace(0, 1, 7)), eval_radial(star8, np.linspace(0, 1, 7)))

    truncated = star8.with_band_limit(4)
    assert truncated.cos_coeffs == (0.0,) * 4

    total = star8.plus(BandLimitedRadialCurve(0.5), -1.0)
    assert abs(total.p0 - 1.0) < 1e-15
    assert total.band_limit == 8

    vec = star8.to_vector()
    assert BandLimitedRadialCurve.from_vector(vec, 8) == star8
    with pytest.raises(InvalidCurveError):
        BandLimitedRadialCurve.from_vector(vec, 7)


def test_fourier_fit_recovers_coefficients(star8):
    """Test that projecting a band-limited profile returns its coefficients."""
    mixed = BandLimitedRadialCurve(1.2, (0.0, 0.1, 0.0), (0.05, 0.0, -0.02))
    for curve in (star8, mixed):
        fitted = fourier_fit(lambda t: eval_radial(curve, t), curve.band_limit, samples=256)
        assert np.max(np.abs(fitted.to_vector() - curve.to_vector())) < 1e-12


def test_ellipsoid_profile():
    """Test the projected ellipse against its semi-axes."""
    curve = ellipsoid_curve(1.0, 2.0, 32)

    assert abs(eval_radial(curve, 0.5) - 1.0) < 1e-8
    assert abs(eval_radial(curve, 1.0) - 2.0) < 1e-8
    assert abs(eval_radial(curve, 0.0) - 2.0) < 1e-8


def test_builtin_curves():
    """Test that every builtin truth is a valid obstacle."""
    for name in ("sphere", "spheroid", "ellipsoid", "star8", "mine"):
        builtin_curve(name).check_positive()
    with pytest.raises(ValueError):
        builtin_curve("teapot")


def test_mine_profile_is_flat():
    """Test that the cylinder-like truth has flat caps and a flat side."""
    mine = builtin_curve("mine")

    assert abs(eval_radial(mine, 0.5) - 1.0) < 0.02
    assert abs(eval_radial(mine, 1.0) - 0.5) < 0.02
    assert mine.band_limit == 64


def test_cross_section_shape(star8):
    """Test the closed cross-section polyline."""
    xs = cross_section(star8, samples=101)

    assert xs.shape == (201, 2)
    assert abs(xs[0, 1] + 1.8) < 1e-12
    assert abs(xs[100, 1] - 1.8) < 1e-12
    assert np.allclose(xs[0], xs[-1])
    assert np.allclose(xs[1:100, 0], -xs[199:100:-1, 0])


def test_axis_frame_identity():
    """Test that the default frame leaves points unchanged."""
    frame = AxisFrame()
    pts = np.array([[1.0, 2.0, 3.0], [-0.5, 0.0, 4.0]])

    assert frame.is_identity
    assert np.array_equal(world_to_axis_frame(pts, frame), pts)
    assert np.allclose(frame.direction, [0.0, 0.0, 1.0])


def test_axis_frame_along_x():
    """Test a frame whose axis is the world x axis."""
    frame = AxisFrame(polar=np.pi / 2, azimuth=0.0)

    assert np.allclose(frame.direction, [1.0, 0.0, 0.0])
    assert np.allclose(world_to_axis_frame([1.0, 0.0, 0.0], frame), [0.0, 0.0, 1.0])
    assert np.allclose(direction_to_axis_frame([1.0, 0.0, 0.0], frame), [0.0, 0.0, 1.0])


def test_axis_frame_round_trip():
    """Test the tilted, shifted frame of the oblique ellipsoid scene."""
    frame = AxisFrame(polar=np.pi / 3, azimuth=np.pi / 4, center_xy=(2.0, 2.0))
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 3))

    back = axis_frame_to_world(world_to_axis_frame(pts, frame), frame)
    assert np.max(np.abs(back - pts)) < 1e-13

    on_axis = frame.center + 1.5 * frame.direction
    local = world_to_axis_frame(on_axis, frame)
    assert np.allclose(local, [0.0, 0.0, 1.5])


def test_axis_frame_validation():
    """Test polar range checking and azimuth wrapping."""
    with pytest.raises(ValueError):
        AxisFrame(polar=4.0)
    assert abs(AxisFrame(polar=0.1, azimuth=-np.pi / 2).azimuth - 1.5 * np.pi) < 1e-15
