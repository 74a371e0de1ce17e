import numpy as np
import numpy.testing as npt
import pytest

from dynamics import (
    NaturalSystem,
    arclength_to_time,
    constant_potential_system,
    energy,
    integrate_trajectory,
    jacobi_factor,
    jacobi_metric,
    newton_residual,
    newton_rhs,
    potential_gradient,
    resample,
    time_to_arclength,
    truncate_admissible,
)
from errors import DegenerateFactor, EnergyMismatch, GridMismatch
from garnier import EDGE_ELLIPSE, EDGE_Q2ZERO, half_loop_length, natural_system
from riemann import ARCLENGTH, TIME, PathSample, euclidean_metric, metric_tensor
from variation import require_geodesic


def test_newton_rhs_garnier_and_vacuum(model):
    system = natural_system(model)
    q = np.array([0.3, 0.2])
    r2 = q @ q
    expected = np.array([2 * q[0] * (r2 - 1), 2 * q[1] * (r2 - 1) + model.sigma ** 2 * q[1]])
    npt.assert_allclose(newton_rhs(system, q, np.array([0.7, -0.1])), expected, atol=1e-14)
    npt.assert_allclose(newton_rhs(system, np.array([1.0, 0.0]), np.zeros(2)), 0.0, atol=1e-14)


def test_free_particle():
    free = constant_potential_system(euclidean_metric(2), 0.0, 0.5)
    npt.assert_array_equal(newton_rhs(free, np.zeros(2), np.array([1.0, 0.0])), 0.0)
    path = integrate_trajectory(free, np.zeros(2), np.array([1.0, 0.0]), (0.0, 1.0), 1e-10, samples=11)
    npt.assert_allclose(path.points[-1], [1.0, 0.0], atol=1e-10)
    assert energy(free, np.zeros(2), np.array([1.0, 0.0])) == 0.5


def test_finite_difference_gradient_matches_analytic(model):
    analytic = natural_system(model)
    numeric = NaturalSystem(metric=analytic.metric, potential=analytic.potential)
    q = np.array([-0.4, 0.35])
    npt.assert_allclose(potential_gradient(numeric, q), potential_gradient(analytic, q), atol=1e-8)


@pytest.mark.parametrize("branch, p0, v0", [
    (EDGE_Q2ZERO, (0.0, 0.0), (1.0, 0.0)),
    (EDGE_ELLIPSE, (0.0, np.sqrt(0.75)), (0.5, 0.0)),
])
def test_separatrix_trajectories_follow_closed_forms(model, branch, p0, v0):
    system = natural_system(model)
    path = integrate_trajectory(system, np.array(p0), np.array(v0), (0.0, 5.0), 1e-10, samples=501)
    if branch == EDGE_Q2ZERO:
        expected = np.stack([np.tanh(path.grid), np.zeros_like(path.grid)], axis=-1)
    else:
        s = model.sigma * path.grid
        expected = np.stack([np.tanh(s), model.sigma_bar / np.cosh(s)], axis=-1)
    npt.assert_allclose(path.points, expected, atol=1e-6)
    assert path.metadata["energy_drift"] <= path.metadata["drift_bound"]


def test_jacobi_factor_and_metric(model):
    system = natural_system(model)
    assert jacobi_factor(system, np.zeros(2)) == pytest.approx(1.0)
    q = np.array([0.3, 0.2])
    npt.assert_allclose(metric_tensor(jacobi_metric(system), q), model.jacobi_factor(q) * np.eye(2))
    constant = constant_potential_system(euclidean_metric(2), level=0.25, i1=1.0)
    assert jacobi_factor(constant, np.array([5.0, -3.0])) == pytest.approx(1.5)


def test_arclength_ranges_of_the_singular_separatrices(model, newton_path):
    system = natural_system(model)
    tk1 = time_to_arclength(system, newton_path(model, EDGE_Q2ZERO, (-3.5, 3.5), 2001))
    assert tk1.parameter_kind == ARCLENGTH
    assert tk1.grid[-1] - tk1.grid[0] == pytest.approx(4.0 / 3.0, abs=1e-4)
    tk2 = time_to_arclength(system, newton_path(model, EDGE_ELLIPSE, (-12.0, 12.0), 2001))
    sigma = model.sigma
    assert tk2.grid[-1] - tk2.grid[0] == pytest.approx(2.0 * sigma * (1.0 - sigma ** 2 / 3.0), abs=1e-4)
    # one loop through the focus is exactly one of each
    assert 0.5 * (tk1.grid[-1] - tk1.grid[0] + tk2.grid[-1] - tk2.grid[0]) == pytest.approx(
        half_loop_length(model), abs=1e-4
    )


def test_arclength_origin_and_unit_speed(model, tk1_path):
    system = natural_system(model)
    spath = time_to_arclength(system, tk1_path)
    centre = int(np.argmin(np.abs(tk1_path.grid)))
    assert spath.grid[centre] == pytest.approx(0.0, abs=1e-12)
    speeds = [np.sqrt(model.jacobi_factor(q) * (T @ T)) for q, T in zip(spath.points, spath.tangents)]
    npt.assert_allclose(speeds, 1.0, atol=1e-10)


def test_time_arclength_round_trip(model, newton_path):
    system = natural_system(model)
    path = newton_path(model, EDGE_Q2ZERO, (-3.0, 3.0), 2001)
    back = arclength_to_time(system, time_to_arclength(system, path))
    assert back.parameter_kind == TIME
    npt.assert_allclose(back.grid, path.grid, atol=1e-8)
    npt.assert_allclose(back.tangents, path.tangents, atol=1e-12)


def test_newton_solution_is_a_jacobi_geodesic(model):
    system = natural_system(model)
    p0 = np.array([0.3, 0.2])
    v0 = np.sqrt(model.jacobi_factor(p0)) * np.array([1.0, 2.0]) / np.sqrt(5.0)
    path = integrate_trajectory(system, p0, v0, (0.0, 1.0), 1e-11, samples=401)
    assert np.max(newton_residual(system, path)[2:-2]) < 1e-6
    require_geodesic(jacobi_metric(system), time_to_arclength(system, path), tol=1e-5)


def test_energy_mismatch(model, tk1_path):
    system = natural_system(model)
    fast = PathSample(TIME, tk1_path.grid, tk1_path.points, 1.1 * tk1_path.tangents)
    with pytest.raises(EnergyMismatch):
        time_to_arclength(system, fast)
    with pytest.raises(GridMismatch):
        arclength_to_time(system, tk1_path)


def test_degenerate_factor_and_truncation(model, newton_path):
    system = natural_system(model)
    long = newton_path(model, EDGE_Q2ZERO, (-12.0, 12.0), 801)
    with pytest.raises(DegenerateFactor):
        time_to_arclength(system, long)
    short = truncate_admissible(system, long)
    assert len(short) < len(long)
    assert short.grid[0] < 0.0 < short.grid[-1]
    spath = time_to_arclength(system, short)
    assert spath.grid[-1] - spath.grid[0] < 4.0 / 3.0


def test_resample(model, tk1_path):
    grid = np.linspace(-1.0, 1.0, 57)
    moved = resample(tk1_path, grid)
    npt.assert_allclose(moved.points[:, 0], np.tanh(grid), atol=1e-8)
    with pytest.raises(GridMismatch):
        resample(tk1_path, np.linspace(-4.0, 0.0, 5))
