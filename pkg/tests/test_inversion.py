"""Tests for shape derivatives and the damped Gauss-Newton reconstruction."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import axiscat.inversion as inversion
from axiscat.curves import AxisFrame, BandLimitedRadialCurve, ellipsoid_curve
from axiscat.errors import ConfigError, ShapeMismatchError
from axiscat.forward import IncidentWave, MeasurementSet
from axiscat.harness import latitude_receptors, sphere_model
from axiscat.inversion import (
    STOP_REASONS,
    InversionConfig,
    JacobianMatrix,
    assemble_jacobian,
    damped_gauss_newton,
    frechet_column,
    gauss_newton_step,
    gaussian_filter,
    hausdorff_distance,
    local_maxima_bracket,
    objective_scan,
    profile_error,
    recursive_linearization,
)
from axiscat.oracles import finite_difference_jacobian, sphere_radius_derivative, sphere_scattered_field, sphere_series

DIRECTIONS = [(0.0, 0.0, 1.0), (1.0, 0.0, 0.0)]


def _receptors(count=20, radius=5.0, seed=8):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(count, 3))
    return radius * v / np.linalg.norm(v, axis=1)[:, None]


def _sphere_measurements(radius, wavenumbers, receptors=None):
    receptors = _receptors() if receptors is None else receptors
    meas = MeasurementSet(receptors, DIRECTIONS)
    for k in wavenumbers:
        sol = sphere_series(k, radius)
        for i, d in enumerate(DIRECTIONS):
            meas.add(k, i, sphere_scattered_field(sol, d, receptors))
    return meas


def test_config_validation():
    """Test that invalid solver settings are refused."""
    with pytest.raises(ConfigError):
        InversionConfig(alpha_rule="adaptive")
    with pytest.raises(ConfigError):
        InversionConfig(alpha=0.0)
    with pytest.raises(ConfigError):
        InversionConfig(alpha_first=-1.0)
    with pytest.raises(ConfigError):
        InversionConfig(residual_tol=0.0)
    with pytest.raises(ConfigError):
        InversionConfig(filter_sigma2=0.0)
    with pytest.raises(ConfigError):
        InversionConfig(schedule=(1.0, 1.0))
    with pytest.raises(ConfigError):
        InversionConfig(schedule=())


def test_band_limit_rule():
    """Test N_p = floor(c k) with an optional cap."""
    cfg = InversionConfig()
    assert cfg.band_limit(0.5) == 1
    assert cfg.band_limit(1.75) == 3
    assert cfg.band_limit(6.5) == 13
    assert InversionConfig(np_max=8).band_limit(6.5) == 8
    assert InversionConfig(np_factor=1.0).band_limit(0.5) == 0


def test_damping_rules():
    """Test the three damping rules and the first-frequency override."""
    assert InversionConfig(alpha=0.2, alpha_rule="constant").damping(3.0, 4.0) == 0.2
    assert InversionConfig(alpha=0.2, alpha_rule="scaled").damping(3.0, 4.0) == pytest.approx(0.05)
    assert InversionConfig(alpha=0.2, alpha_rule="freq_scaled").damping(2.0, 4.0) == pytest.approx(0.025)

    cfg = InversionConfig(alpha=0.2, alpha_first=0.7)
    assert cfg.damping(2.0, 4.0, first=True) == 0.7
    assert cfg.damping(2.0, 4.0) == pytest.approx(0.05)


def test_damping_never_exceeds_full_step():
    """Test that short updates are taken whole instead of amplified."""
    assert InversionConfig(alpha=0.1, alpha_rule="scaled").damping(3.0, 0.01) == 1.0
    assert InversionConfig(alpha=0.1, alpha_rule="freq_scaled").damping(0.5, 0.1) == 1.0
    assert InversionConfig(alpha=2.0, alpha_rule="constant").damping(1.0, 1.0) == 1.0
    assert InversionConfig(alpha=0.1, alpha_first=3.0).damping(1.0, 1.0, first=True) == 1.0


def test_scaled_rule_takes_short_step_whole():
    """Test that a small misfit is corrected by a full Gauss-Newton step."""
    k = 1.0
    meas = _sphere_measurements(1.02, [k])
    cfg = InversionConfig(alpha=0.1, alpha_rule="scaled", max_iters=1, residual_tol=1e-8, step_tol=1e-8, schedule=(k,))

    curve, trace = damped_gauss_newton(meas, k, BandLimitedRadialCurve.constant(1.0), cfg, first_frequency=False)

    assert trace.records[1].accepted
    assert trace.records[1].alpha == 1.0
    assert abs(curve.p0 - 1.02) < 1e-3


def test_gauss_newton_step_recovers_real_solution():
    """Test the stacked real least-squares solve on a consistent system."""
    rng = np.random.default_rng(2)
    matrix = rng.normal(size=(30, 5)) + 1j * rng.normal(size=(30, 5))
    h_true = rng.normal(size=5)

    h = gauss_newton_step(JacobianMatrix(matrix, 1.0, 2), matrix @ h_true)

    assert np.max(np.abs(h - h_true)) < 1e-12


def test_gauss_newton_step_shape_errors():
    """Test row mismatches and underdetermined systems."""
    J = JacobianMatrix(np.ones((4, 3), dtype=complex), 1.0, 1)
    with pytest.raises(ShapeMismatchError):
        gauss_newton_step(J, np.ones(5))
    with pytest.raises(ShapeMismatchError):
        gauss_newton_step(np.ones((2, 3), dtype=complex), np.ones(2))
    with pytest.raises(ShapeMismatchError):
        JacobianMatrix(np.ones((4, 4), dtype=complex), 1.0, 1)


def test_gauss_newton_step_zero_matrix():
    """Test that a vanishing Jacobian yields no update."""
    h = gauss_newton_step(np.zeros((6, 3), dtype=complex), np.ones(6))
    assert np.array_equal(h, np.zeros(3))


def test_gaussian_filter_values():
    """Test the filter weights and the untouched constant term."""
    h = np.array([2.0, 1.0, 1.0, 1.0, 1.0])
    out = gaussian_filter(h, 2, 0.5)

    assert out[0] == 2.0
    assert out[1] == pytest.approx(np.exp(-0.25 / 0.5))
    assert out[2] == pytest.approx(np.exp(-1.0 / 0.5))
    assert out[3] == out[1]
    with pytest.raises(ValueError):
        gaussian_filter(h, 2, 0.0)
    with pytest.raises(ShapeMismatchError):
        gaussian_filter(h, 3, 1.0)


@settings(max_examples=50, deadline=None)
@given(
    n_p=st.integers(min_value=0, max_value=12),
    sigma2=st.floats(min_value=1e-3, max_value=1e3),
    seed=st.integers(min_value=0, max_value=1000),
)
def test_gaussian_filter_contracts(n_p, sigma2, seed):
    """Test that filtering never increases any coefficient."""
    h = np.random.default_rng(seed).normal(size=2 * n_p + 1)
    out = gaussian_filter(h, n_p, sigma2)

    assert np.all(np.abs(out) <= np.abs(h))
    assert out[0] == h[0]


def test_local_maxima_bracket():
    """Test the nearest maxima around the centre and the endpoint fallback."""
    radii = np.linspace(0.1, 3.0, 300)
    values = np.abs(np.sin(2.0 * radii))
    a, b = local_maxima_bracket(radii, values, center=1.0)

    assert abs(a - np.pi / 4) < 1e-2
    assert abs(b - 3 * np.pi / 4) < 1e-2

    a, b = local_maxima_bracket(radii, (radii - 1.0) ** 2, center=1.0)
    assert (a, b) == (radii[0], radii[-1])


def test_objective_scan_with_sphere_model():
    """Test that the objective vanishes at the true radius and is bracketed around it."""
    k = 2.0
    meas = _sphere_measurements(1.0, [k])
    radii = np.linspace(0.5, 1.5, 101)

    scan = objective_scan(meas, k, radii=radii, model=sphere_model(meas, k))

    assert scan.values[50] < 1e-12 * np.max(scan.values)
    assert int(np.argmin(scan.values)) == 50
    assert scan.bracket[0] < 1.0 < scan.bracket[1]


def test_profile_error_and_hausdorff():
    """Test the reconstruction error measures on concentric spheres."""
    a = BandLimitedRadialCurve.constant(1.0)
    b = BandLimitedRadialCurve.constant(1.1)

    assert profile_error(a, a) == 0.0
    assert profile_error(a, b) == pytest.approx(0.1)
    assert hausdorff_distance(a, b) == pytest.approx(0.1, rel=1e-9)
    assert hausdorff_distance(a, a) == 0.0


def test_radius_column_matches_sphere_derivative(unit_sphere):
    """Test the h0 column of the unit sphere against the radius derivative of the series."""
    k = 1.0
    receptors = _receptors()
    waves = [IncidentWave(k, d) for d in DIRECTIONS]

    J = assemble_jacobian(unit_sphere, AxisFrame(), k, waves, receptors, band_limit=0)
    sol = sphere_series(k, 1.0)
    exact = np.concatenate([sphere_radius_derivative(sol, d, receptors) for d in DIRECTIONS])

    assert J.shape == (2 * receptors.shape[0], 1)
    assert np.max(np.abs(J.matrix[:, 0] - exact)) < 1e-5 * np.max(np.abs(exact))


def test_frechet_column_matches_jacobian(star8):
    """Test the single-column entry point against the assembled matrix."""
    k = 1.0
    receptors = _receptors(8)
    waves = [IncidentWave(k, DIRECTIONS[1])]

    J = assemble_jacobian(star8, AxisFrame(), k, waves, receptors, band_limit=2)
    col = frechet_column(star8, AxisFrame(), k, waves, receptors, 3, band_limit=2)

    assert np.allclose(col, J.matrix[:, 3], rtol=0, atol=1e-12 * np.max(np.abs(col)))
    with pytest.raises(ValueError):
        frechet_column(star8, AxisFrame(), k, waves, receptors, 5, band_limit=2)


def test_gauss_newton_recovers_sphere_radius():
    """Test undamped Gauss-Newton from radius 1 to radius 1.2."""
    k = 1.0
    meas = _sphere_measurements(1.2, [k])
    cfg = InversionConfig(alpha=1.0, alpha_rule="constant", residual_tol=1e-5, step_tol=1e-8, schedule=(k,))

    curve, trace = damped_gauss_newton(meas, k, BandLimitedRadialCurve.constant(1.0), cfg)

    assert abs(curve.p0 - 1.2) < 1e-4
    assert trace.stop_reason in STOP_REASONS
    assert trace.records[0].iteration == 0
    residuals = [r.residual for r in trace.records if r.accepted]
    assert residuals == sorted(residuals, reverse=True)
    assert trace.final_residual < 1e-3


def test_zero_iterations_keep_initial():
    """Test that N_it = 0 returns the starting curve."""
    k = 1.0
    meas = _sphere_measurements(1.2, [k])
    start = BandLimitedRadialCurve.constant(1.0)

    curve, trace = damped_gauss_newton(meas, k, start, InversionConfig(max_iters=0, schedule=(k,)))

    assert curve == start
    assert trace.accepted_iterations == 0
    assert trace.stop_reason == "max_iters"


def test_recursive_linearization_needs_every_wavenumber():
    """Test that the schedule must be covered by the data."""
    meas = _sphere_measurements(1.0, [1.0])
    cfg = InversionConfig(schedule=(1.0, 2.0))

    with pytest.raises(ValueError):
        recursive_linearization(meas, BandLimitedRadialCurve.constant(1.0), cfg)


def test_recursive_linearization_keeps_partial_results(monkeypatch):
    """Test that a failing frequency ends the sweep with earlier results kept."""
    meas = _sphere_measurements(1.0, [0.5, 1.0])
    cfg = InversionConfig(np_factor=2.0, schedule=(0.5, 1.0))

    def fake_run(data, k, initial, cfg, **kwargs):
        if k > 0.5:
            raise RuntimeError("solver diverged")
        return initial, inversion.GaussNewtonTrace(k, initial.band_limit, stop_reason="max_iters")

    monkeypatch.setattr(inversion, "damped_gauss_newton", fake_run)
    seen = []
    result = recursive_linearization(
        meas, BandLimitedRadialCurve.constant(1.0), cfg, callback=lambda k, c, t: seen.append(k),
    )

    assert not result.completed
    assert result.failed_at == 1.0
    assert "diverged" in result.error
    assert result.wavenumbers == [0.5]
    assert result.final.band_limit == 1
    assert seen == [0.5]


@pytest.mark.slow
def test_jacobian_matches_finite_differences():
    """Test every shape-derivative column of a spheroid against central differences."""
    k = 2.0
    curve = ellipsoid_curve(1.0, 2.0, 4)
    receptors = _receptors(12)
    waves = [IncidentWave(k, d) for d in DIRECTIONS]
    frame = AxisFrame(polar=0.4, azimuth=1.0, center_xy=(0.3, -0.2))
    placed = receptors + frame.center

    J = assemble_jacobian(curve, frame, k, waves, placed, band_limit=4)
    fd = finite_difference_jacobian(curve, frame, k, waves, placed, band_limit=4)

    assert J.shape == fd.matrix.shape == (2 * receptors.shape[0], 9)
    for j in range(9):
        column = fd.matrix[:, j]
        assert np.max(np.abs(J.matrix[:, j] - column)) <= 1e-4 * np.max(np.abs(column))

    # central differences converge at second order toward the derivative
    wide = finite_difference_jacobian(curve, frame, k, waves, placed, band_limit=4, step=0.08)
    narrow = finite_difference_jacobian(curve, frame, k, waves, placed, band_limit=4, step=0.04)
    ratio = np.linalg.norm(wide.matrix[:, 0] - J.matrix[:, 0]) / np.linalg.norm(narrow.matrix[:, 0] - J.matrix[:, 0])
    assert 3.0 <= ratio <= 5.0


@pytest.mark.slow
def test_gauss_newton_basin_at_k5():
    """Test convergence from inside the sphere-radius basin and stalling outside it."""
    k = 5.0
    receptors = latitude_receptors(10, 10, 10.0)
    direction = (np.cos(np.pi / 9), 0.0, np.sin(np.pi / 9))
    meas = MeasurementSet(receptors, [direction])
    meas.add(k, 0, sphere_scattered_field(sphere_series(k, 1.0), direction, receptors))
    cfg = InversionConfig(
        alpha=0.1, alpha_rule="scaled", max_iters=20, residual_tol=1e-4, step_tol=1e-8, schedule=(k,),
    )

    inside, _ = damped_gauss_newton(meas, k, BandLimitedRadialCurve.constant(0.7), cfg, first_frequency=False)
    outside, _ = damped_gauss_newton(meas, k, BandLimitedRadialCurve.constant(0.4), cfg, first_frequency=False)

    assert abs(inside.p0 - 1.0) < 1e-2
    assert abs(outside.p0 - 1.0) > 0.1


@pytest.mark.slow
def test_sweep_recovers_sphere():
    """Test a short frequency sweep on sphere data."""
    meas = _sphere_measurements(1.2, [0.5, 1.0, 1.5])
    cfg = InversionConfig(alpha=1.0, alpha_rule="constant", np_factor=1.0, residual_tol=1e-4, schedule=(0.5, 1.0, 1.5))

    result = recursive_linearization(meas, BandLimitedRadialCurve.constant(1.0), cfg)

    assert result.completed
    assert result.wavenumbers == [0.5, 1.0, 1.5]
    assert [c.band_limit for c in result.curves] == [0, 1, 1]
    assert profile_error(BandLimitedRadialCurve.constant(1.2), result.final) < 1e-3
