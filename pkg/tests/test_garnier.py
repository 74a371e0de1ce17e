import numpy as np
import numpy.testing as npt
import pytest
from scipy.optimize import brentq

from dynamics import jacobi_metric
from errors import ChartBoundary, JacobiMorseError, OutOfRange, OutsideChart, SingularFactor
from garnier import (
    EDGE_ELLIPSE,
    EDGE_Q2ZERO,
    BranchSigns,
    GarnierModel,
    LoopPoint,
    arclength_relation,
    base_point,
    cartesian_to_elliptic,
    elliptic_jacobian,
    elliptic_metric,
    elliptic_momenta,
    elliptic_to_cartesian,
    explicit_jacobi_field,
    explicit_jacobi_field_cartesian,
    fit_time_offset,
    focus_point,
    half_loop_length,
    jacobi_factor_elliptic,
    jacobi_linear_system_residual,
    loop_length,
    natural_system,
    newton_family_path,
    orbit_parameter,
    orbit_residual,
    reduced_geodesic_residual,
    separatrix_family,
    separatrix_point,
    singular_geodesic_arclength,
    singular_geodesic_path,
    singular_range,
    singular_solution_time,
    solve_separatrix_geodesic,
    stackel_hamiltonian,
    time_residual,
)
from morse import jacobi_field_from_family
from numerics import grid_derivative
from riemann import integrate_geodesic
from variation import require_geodesic

ORBITS = (-0.3, -0.2, 0.0, 0.3, 0.4)


def _signs(path, n):
    return BranchSigns(*(int(v) for v in path.metadata["alpha"][n]))


def test_model_validation_and_vacuum_values(model):
    with pytest.raises(OutOfRange):
        GarnierModel(1.5)
    with pytest.raises(OutOfRange):
        GarnierModel(0.0)
    assert model.jacobi_factor(np.zeros(2)) == pytest.approx(1.0)
    assert model.jacobi_factor(base_point(model)) == 0.0
    assert loop_length(model) == pytest.approx(4.0 / 3.0 + 2.0 * 0.5 * (1.0 - 0.25 / 3.0))


def _interior_points(model, count, seed=2002):
    rng = np.random.default_rng(seed)
    points = []
    while len(points) < count:
        rho, angle = rng.uniform(0.05, 0.95), rng.uniform(0.0, 2.0 * np.pi)
        q = np.array([rho * np.cos(angle), np.sqrt(model.sigma_bar2) * rho * np.sin(angle)])
        if min(abs(q[0]), abs(q[1])) > 0.05:
            points.append(q)
    return points


def test_elliptic_chart_round_trip(model):
    for q in _interior_points(model, 100):
        mu = cartesian_to_elliptic(model, q)
        quadrant = (1 if q[0] >= 0 else -1, 1 if q[1] >= 0 else -1)
        npt.assert_allclose(elliptic_to_cartesian(model, mu, quadrant), q, atol=1e-10)


def test_special_points_in_the_chart(model):
    sb2 = model.sigma_bar2
    npt.assert_allclose(cartesian_to_elliptic(model, focus_point(model)), (sb2, sb2), atol=1e-12)
    npt.assert_allclose(cartesian_to_elliptic(model, np.array([model.sigma, 0.0])), (sb2, sb2), atol=1e-12)
    npt.assert_allclose(cartesian_to_elliptic(model, base_point(model)), (0.0, sb2), atol=1e-12)
    npt.assert_allclose(cartesian_to_elliptic(model, np.zeros(2)), (sb2, 1.0), atol=1e-12)


def test_chart_errors(model):
    with pytest.raises(OutsideChart):
        cartesian_to_elliptic(model, np.array([2.0, 0.0]))
    with pytest.raises(OutsideChart):
        elliptic_to_cartesian(model, (0.9, 0.95))
    with pytest.raises(ChartBoundary):
        elliptic_metric(model, (model.sigma_bar2, 0.9))


def test_elliptic_metric_is_the_pulled_back_euclidean_metric(model):
    q = np.array([0.3, 0.2])
    mu = cartesian_to_elliptic(model, q)
    jac = elliptic_jacobian(model, mu)
    npt.assert_allclose(jac.T @ jac, elliptic_metric(model, mu), rtol=1e-10, atol=1e-12)


def test_jacobi_factor_in_both_charts(model):
    for q in (np.array([0.3, 0.2]), np.array([-0.45, 0.5]), np.zeros(2)):
        mu = cartesian_to_elliptic(model, q)
        assert jacobi_factor_elliptic(model, mu) == pytest.approx(model.jacobi_factor(q), rel=1e-10, abs=1e-12)


def test_stackel_hamiltonian_is_the_energy(model):
    q = np.array([0.3, 0.2])
    qdot = np.array([0.4, -0.25])
    pi = elliptic_momenta(model, q, qdot)
    expected = 0.5 * qdot @ qdot + model.potential(q)
    assert stackel_hamiltonian(model, cartesian_to_elliptic(model, q), pi) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("branch", [EDGE_Q2ZERO, EDGE_ELLIPSE])
def test_singular_geodesics(model, branch):
    limit = singular_range(model, branch)
    start = singular_geodesic_arclength(model, branch, -limit)
    end = singular_geodesic_arclength(model, branch, limit)
    npt.assert_allclose(start, [-1.0, 0.0], atol=1e-7)
    npt.assert_allclose(end, [1.0, 0.0], atol=1e-7)
    with pytest.raises(OutOfRange):
        singular_geodesic_arclength(model, branch, 1.01 * limit)

    s = np.linspace(-0.9 * limit, 0.9 * limit, 401)
    path = singular_geodesic_path(model, branch, s)
    x, y = path.points[:, 0], path.points[:, 1]
    if branch == EDGE_Q2ZERO:
        npt.assert_allclose(x - x ** 3 / 3.0, s, atol=1e-12)
        npt.assert_array_equal(y, 0.0)
    else:
        npt.assert_allclose(x ** 2 + y ** 2 / model.sigma_bar2, 1.0, atol=1e-12)
    speeds = [model.jacobi_factor(q) * (T @ T) for q, T in zip(path.points, path.tangents)]
    npt.assert_allclose(speeds, 1.0, atol=1e-10)

    dq1 = path.tangents[:, 0]
    ddq1 = grid_derivative(s, dq1)
    residual = reduced_geodesic_residual(model, branch, x, dq1, ddq1)
    assert np.max(np.abs(residual[2:-2])) < 1e-5 * np.max(np.abs(ddq1))


def test_integrated_jacobi_geodesic_follows_the_cubic(model):
    h = jacobi_metric(natural_system(model))
    end = singular_range(model, EDGE_Q2ZERO) - 0.05
    path = integrate_geodesic(h, np.zeros(2), np.array([1.0, 0.0]), (0.0, end), 1e-10, samples=201)
    expected = np.array([singular_geodesic_arclength(model, EDGE_Q2ZERO, s) for s in path.grid])
    npt.assert_allclose(path.points, expected, atol=1e-6)


def test_loop_end_points(model):
    half = half_loop_length(model)
    npt.assert_allclose(separatrix_point(model, 0.2, -half).q, base_point(model), atol=1e-12)
    npt.assert_allclose(separatrix_point(model, 0.2, half).q, base_point(model), atol=1e-12)
    npt.assert_allclose(separatrix_point(model, 0.2, 0.0).q, focus_point(model), atol=1e-12)
    with pytest.raises(OutOfRange):
        separatrix_point(model, 0.2, 1.1 * half)
    assert separatrix_point(model, 0.2, -0.5 * half).q[1] > 0.0
    assert separatrix_point(model, 0.2, 0.5 * half).q[1] < 0.0


@pytest.mark.parametrize("a", ORBITS)
def test_loop_satisfies_orbit_and_arclength_relations(model, loop_s_grid, a):
    path = solve_separatrix_geodesic(model, a, loop_s_grid)
    for n, s in enumerate(loop_s_grid):
        mu, signs = path.metadata["mu"][n], _signs(path, n)
        assert orbit_residual(model, mu, a, signs) == pytest.approx(0.0, abs=1e-8)
        assert orbit_parameter(model, mu, signs) == pytest.approx(a, abs=1e-8)
        assert arclength_relation(model, mu, signs) == pytest.approx(s, abs=1e-10)


@pytest.mark.parametrize("a", ORBITS)
def test_loop_is_a_unit_speed_jacobi_geodesic(model, a):
    half = half_loop_length(model)
    grid = np.linspace(-0.8 * half, 0.8 * half, 400)
    path = solve_separatrix_geodesic(model, a, grid)
    speeds = [model.jacobi_factor(q) * (T @ T) for q, T in zip(path.points, path.tangents)]
    npt.assert_allclose(speeds, 1.0, atol=1e-6)
    require_geodesic(jacobi_metric(natural_system(model)), path, tol=1e-4)


def test_solver_rejects_grids_reaching_the_vacuum(model):
    half = half_loop_length(model)
    with pytest.raises(OutOfRange):
        solve_separatrix_geodesic(model, 0.0, np.linspace(-half, 0.0, 11))


def test_explicit_field_solves_the_linear_conditions(model, loop_s_grid):
    path = solve_separatrix_geodesic(model, 0.3, loop_s_grid)
    checked = 0
    for n, q in enumerate(path.points):
        if abs(q[0]) < 1e-2 or abs(q[1]) < 1e-2:
            continue
        mu, signs = path.metadata["mu"][n], _signs(path, n)
        J = explicit_jacobi_field(model, mu, signs)
        npt.assert_allclose(jacobi_linear_system_residual(model, mu, signs, J), 0.0, atol=1e-7)
        checked += 1
    assert checked > 100


@pytest.mark.parametrize("a", ORBITS)
def test_family_field_matches_the_closed_form(model, loop_s_grid, a):
    path = solve_separatrix_geodesic(model, a, loop_s_grid)
    J = jacobi_field_from_family(separatrix_family(model), a, loop_s_grid)
    keep, closed = [], []
    for n, q in enumerate(path.points):
        if abs(q[0]) < 1e-2 or abs(q[1]) < 1e-2:
            continue
        try:
            closed.append(explicit_jacobi_field_cartesian(model, q, _signs(path, n)))
        except JacobiMorseError:
            continue
        keep.append(n)
    closed = np.array(closed)
    family = J[keep]
    scale = float(np.sum(family * closed) / np.sum(closed * closed))
    assert scale == pytest.approx(1.0, abs=1e-3)
    peak = np.max(np.linalg.norm(J, axis=1))
    assert np.max(np.linalg.norm(family - scale * closed, axis=1)) <= 1e-4 * peak


@pytest.mark.parametrize("a", (0.0, 0.4))
def test_time_law_holds_on_each_half(model, loop_s_grid, a):
    path = newton_family_path(model, a, loop_s_grid)
    half = half_loop_length(model)
    for first in (True, False):
        s = loop_s_grid
        window = (np.abs(s) > 0.1 * half) & (np.abs(s) < 0.7 * half) & ((s < 0.0) == first)
        idx = np.flatnonzero(window)
        mus = [path.metadata["mu"][n] for n in idx]
        signs = [_signs(path, n) for n in idx]
        times = path.grid[idx]
        t0 = fit_time_offset(model, mus, times, signs)
        residuals = [time_residual(model, mu, t, t0, sg) for mu, t, sg in zip(mus, times, signs)]
        npt.assert_allclose(residuals, 0.0, atol=1e-5)


def test_time_law_is_translation_covariant(model):
    mu = cartesian_to_elliptic(model, np.array([0.3, 0.2]))
    signs = BranchSigns(0, 1)
    base = time_residual(model, mu, 0.4, 0.1, signs)
    assert time_residual(model, mu, 0.4 + 0.25, 0.1 - 0.25, signs) == pytest.approx(base, abs=1e-12)


def test_time_law_degenerates_on_the_q2_zero_solution(model):
    # μ₂ = σ̄² pins √(1 − μ₂) at σ, where the time law has a logarithmic pole
    t = np.linspace(0.6, 3.0, 25)
    points = singular_solution_time(model, EDGE_Q2ZERO, t)
    for tk, q in zip(t, points):
        mu = (1.0 - np.tanh(tk) ** 2, model.sigma_bar2)
        npt.assert_allclose(cartesian_to_elliptic(model, q), mu, atol=1e-12)
        for signs in (BranchSigns(0, 0), BranchSigns(0, 1)):
            with pytest.raises(SingularFactor):
                time_residual(model, mu, tk, 0.0, signs)


@pytest.mark.parametrize("a", ORBITS)
def test_arclength_relation_is_continuous_across_the_fold(model, a):
    half = half_loop_length(model)
    fold = brentq(lambda s: separatrix_point(model, a, s).q[0], -0.999 * half, -1e-6, xtol=1e-14)
    mu = separatrix_point(model, a, fold).mu
    for alpha2 in (0, 1):
        assert arclength_relation(model, mu, BranchSigns(0, alpha2)) == pytest.approx(fold, abs=1e-8)

    before = separatrix_point(model, a, fold - 1e-3)
    after = separatrix_point(model, a, fold + 1e-3)
    assert before.signs.alpha2 != after.signs.alpha2
    assert arclength_relation(model, before.mu, before.signs) == pytest.approx(fold - 1e-3, abs=1e-10)
    assert arclength_relation(model, after.mu, after.signs) == pytest.approx(fold + 1e-3, abs=1e-10)


def test_newton_family_starts_the_clock_at_the_focus(model):
    grid = np.linspace(-0.5, 0.5, 101)
    path = newton_family_path(model, 0.1, grid)
    assert path.grid[50] == pytest.approx(0.0, abs=1e-12)
    npt.assert_allclose(path.points[50], focus_point(model), atol=1e-12)
    t_grid = np.linspace(path.grid[0], path.grid[-1], 41)
    resampled = newton_family_path(model, 0.1, grid, t_grid)
    npt.assert_array_equal(resampled.grid, t_grid)


def test_fold_detection(model):
    fold = LoopPoint(np.array([0.0, 0.8]), 0.8, 0.0, True)
    assert fold.on_fold
    assert not separatrix_point(model, 0.1, -0.3).on_fold
