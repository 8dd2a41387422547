"""Tests for far-field patterns and their transforms."""

import numpy as np
import pytest

from axiscat.curves import AxisFrame
from axiscat.errors import FitResidualError, SphereGridError
from axiscat.farfield import (
    FarFieldGrid,
    angular_grid,
    detect_sphere_grid,
    farfield_at,
    farfield_from_density,
    farfield_from_sphere_data,
    obstacle_farfield,
    pole_rotation,
    rotate_farfield,
    sphere_grid,
    translate_farfield,
    unit_vectors,
)
from axiscat.forward import ForwardSolver, IncidentWave, MeasurementSet, ModalDensitySet, forward_operator
from axiscat.harness import add_noise
from axiscat.oracles import sphere_farfield, sphere_scattered_field, sphere_series

OBLIQUE = (np.cos(np.pi / 9), 0.0, np.sin(np.pi / 9))


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


def _sphere_data(k, radius_b, direction, margin=12, radius=1.0):
    sg = sphere_grid(radius_b, k, margin)
    pts = sg.points()
    meas = MeasurementSet(pts, [direction])
    meas.add(k, 0, sphere_scattered_field(sphere_series(k, radius), direction, pts))
    return meas


def test_grid_validation():
    """Test that malformed grids are rejected."""
    thetas, phis = angular_grid(4, 4)
    with pytest.raises(ValueError):
        FarFieldGrid(thetas[::-1], phis, np.zeros((5, 5)), 1.0, (0, 0, 1))
    with pytest.raises(ValueError):
        FarFieldGrid(thetas, phis, np.zeros((5, 4)), 1.0, (0, 0, 1))
    with pytest.raises(ValueError):
        FarFieldGrid(thetas, phis, np.full((5, 5), np.nan), 1.0, (0, 0, 1))


def test_zero_density_gives_zero(unit_sphere):
    """Test that a vanishing density radiates nothing."""
    solver = ForwardSolver(unit_sphere, 1.0)
    wave = IncidentWave(1.0, (0.0, 0.0, 1.0))
    zero = ModalDensitySet(wave, np.zeros((solver.m_max + 1, solver.disc.node_count), dtype=complex))

    ff = farfield_from_density(zero, solver.disc, 1.0, angular_grid(8, 8))
    assert np.all(ff.values == 0)


@pytest.mark.parametrize("direction", [(0.0, 0.0, 1.0), OBLIQUE])
def test_sphere_farfield_matches_series(unit_sphere, direction):
    """Test the density far field of the unit sphere against the series."""
    k = 1.0
    solver = ForwardSolver(unit_sphere, k)
    grid = angular_grid(12, 12)

    ff = obstacle_farfield(solver, AxisFrame(), direction, grid)
    exact = sphere_farfield(sphere_series(k, 1.0), direction, unit_vectors(*grid).reshape(-1, 3))

    assert _rel(ff.values.reshape(-1), exact) < 1e-6


def test_farfield_is_large_radius_limit(star8):
    """Test u_scat(R xhat) R e^{-ikR} against u_inf(xhat) at R = 1e5."""
    k = 2.0
    solver = ForwardSolver(star8, k)
    dset = solver.solve([IncidentWave.towards(k, OBLIQUE)])
    xhat = unit_vectors(*angular_grid(6, 6)).reshape(-1, 3)[7:30]
    R = 1e5

    near = solver.scattered(dset, R * xhat)[0] * R * np.exp(-1j * k * R)
    far = farfield_at(dset, solver.disc, k, xhat)[0]

    assert np.max(np.abs(near - far)) <= 1e-3 * np.max(np.abs(far))


def test_monopole_has_unit_farfield():
    """Test that e^{ikR}/R on the measurement sphere has far field 1."""
    k, radius_b = 3.0, 5.0
    pts = sphere_grid(radius_b, k).points()
    meas = MeasurementSet(pts, [(0.0, 0.0, 1.0)])
    meas.add(k, 0, np.full(pts.shape[0], np.exp(1j * k * radius_b) / radius_b))

    ff = farfield_from_sphere_data(meas, k, 0, angular_grid(10, 10))
    assert np.max(np.abs(ff.values - 1.0)) < 1e-10


def test_sphere_data_route_matches_series():
    """Test the harmonic extraction on exact sphere-scattering data."""
    k, radius_b = 3.0, 5.0
    meas = _sphere_data(k, radius_b, OBLIQUE)
    grid = angular_grid(16, 16)

    ff = farfield_from_sphere_data(meas, k, 0, grid)
    exact = sphere_farfield(sphere_series(k, 1.0), OBLIQUE, unit_vectors(*grid).reshape(-1, 3))

    assert _rel(ff.values.reshape(-1), exact) < 1e-6
    assert ff.direction == tuple(OBLIQUE)


def test_sphere_data_route_rejects_noise():
    """Test that noisy data fail the default fit tolerance and pass a relaxed one."""
    k, radius_b = 3.0, 5.0
    meas = _sphere_data(k, radius_b, OBLIQUE)
    clean = farfield_from_sphere_data(meas, k, 0, angular_grid(16, 16))
    meas.add(k, 0, add_noise(meas.block(k, 0), 0.02, np.random.default_rng(1)))

    with pytest.raises(FitResidualError):
        farfield_from_sphere_data(meas, k, 0, angular_grid(16, 16))
    noisy = farfield_from_sphere_data(meas, k, 0, angular_grid(16, 16), fit_tolerance=0.1)
    assert _rel(noisy.values, clean.values) < 0.05


def test_detect_sphere_grid():
    """Test recognition of receptor grids."""
    sg = sphere_grid(4.0, 2.0, margin=4)
    found = detect_sphere_grid(sg.points())

    assert (found.n_theta, found.n_phi) == (sg.n_theta, sg.n_phi)
    assert abs(found.radius - 4.0) < 1e-12
    with pytest.raises(SphereGridError):
        detect_sphere_grid(np.random.default_rng(0).normal(size=(50, 3)))
    with pytest.raises(SphereGridError):
        detect_sphere_grid(sg.points()[::-1])


def test_translate_identity_and_modulus():
    """Test that translation is unimodular and trivial for h = 0."""
    thetas, phis = angular_grid(10, 10)
    rng = np.random.default_rng(4)
    values = rng.normal(size=(11, 11)) + 1j * rng.normal(size=(11, 11))
    ff = FarFieldGrid(thetas, phis, values, 2.0, OBLIQUE)

    assert np.array_equal(translate_farfield(ff, (0.0, 0.0, 0.0)).values, values)
    moved = translate_farfield(ff, (0.3, -1.0, 2.0))
    assert np.allclose(np.abs(moved.values), np.abs(values), rtol=1e-14, atol=0)

    twice = translate_farfield(translate_farfield(ff, (0.3, 0.0, 1.0)), (-0.1, 0.4, 0.0))
    once = translate_farfield(ff, (0.2, 0.4, 1.0))
    assert np.allclose(twice.values, once.values, rtol=1e-12, atol=0)


def test_translation_law_for_shifted_spheroid(spheroid):
    """Test the far field of a shifted spheroid from sphere data against translation."""
    k = 1.0
    h = (0.7, -1.3, 0.0)
    sg = sphere_grid(5.0, k, margin=30)
    wave = IncidentWave.towards(k, OBLIQUE)
    meas = forward_operator(spheroid, AxisFrame(center_xy=h[:2]), k, [wave], sg.points())
    grid = angular_grid(12, 12)

    shifted = farfield_from_sphere_data(meas, k, 0, grid, margin=30)
    centred = obstacle_farfield(ForwardSolver(spheroid, k), AxisFrame(), OBLIQUE, grid)

    assert _rel(shifted.values, translate_farfield(centred, h).values) < 1e-6


def test_rotate_identity():
    """Test that the current pole leaves grid values unchanged."""
    k = 1.0
    grid = angular_grid(20, 20)
    values = sphere_farfield(sphere_series(k, 1.0), OBLIQUE, unit_vectors(*grid).reshape(-1, 3)).reshape(21, 21)
    ff = FarFieldGrid(grid[0], grid[1], values, k, OBLIQUE)

    same = rotate_farfield(ff, (0.0, 0.0))
    assert np.max(np.abs(same.values - values)) < 1e-12
    assert np.allclose(same.direction, OBLIQUE)


def test_rotate_round_trip():
    """Test rotating to a pole and back within twice the interpolation error."""
    k = 1.0
    grid = angular_grid(80, 80)
    values = sphere_farfield(sphere_series(k, 1.0), OBLIQUE, unit_vectors(*grid).reshape(-1, 3)).reshape(81, 81)
    ff = FarFieldGrid(grid[0], grid[1], values, k, OBLIQUE)
    azimuth, polar = 0.8, 0.6

    there = rotate_farfield(ff, (azimuth, polar))
    back = rotate_farfield(there, (np.pi, polar), spin=-np.pi - azimuth)

    assert _rel(back.values, values) < 5e-3
    assert np.allclose(back.direction, OBLIQUE, atol=1e-12)


def test_rotated_sphere_field_is_rotation_invariant():
    """Test that a sphere far field rotated with its direction keeps its form."""
    k = 1.0
    grid = angular_grid(60, 60)
    sol = sphere_series(k, 1.0)
    values = sphere_farfield(sol, OBLIQUE, unit_vectors(*grid).reshape(-1, 3)).reshape(61, 61)
    ff = FarFieldGrid(grid[0], grid[1], values, k, OBLIQUE)

    rotated = rotate_farfield(ff, (1.0, 0.4))
    expected = sphere_farfield(sol, rotated.direction, unit_vectors(*grid).reshape(-1, 3)).reshape(61, 61)
    assert _rel(rotated.values, expected) < 5e-3
    assert np.allclose(pole_rotation((1.0, 0.4)).apply(rotated.direction), OBLIQUE)


def test_mirror_symmetry_of_aligned_obstacle(spheroid):
    """Test |u_inf| mirror symmetry about the plane of the axis and d."""
    k = 2.0
    solver = ForwardSolver(spheroid, k)
    grid = angular_grid(24, 12)

    ff = obstacle_farfield(solver, AxisFrame(), OBLIQUE, grid)
    modulus = np.abs(ff.values)
    assert np.max(np.abs(modulus - modulus[::-1])) < 1e-8 * np.max(modulus)

    axial = obstacle_farfield(solver, AxisFrame(), (0.0, 0.0, 1.0), grid)
    assert np.max(np.abs(axial.values - axial.values[:1])) < 1e-8 * np.max(np.abs(axial.values))
