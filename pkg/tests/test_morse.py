import logging

import numpy as np
import numpy.testing as npt
import pytest

from cli import TIME_TRIM
from errors import FamilyResidual, GridMismatch, NoisyAmplitude, OutOfRange, TruncationMismatch, TruncationOverflow, Unsupported
from garnier import (
    focus_point,
    garnier_jacobi_metric,
    loop_grid,
    loop_length,
    natural_system,
    newton_family,
    newton_family_path,
    separatrix_family,
    solve_separatrix_geodesic,
)
from morse import (
    FormalSeries,
    SolutionFamily,
    conjugate_points,
    geodesic_fan,
    iterate_field,
    iterate_path,
    jacobi_equation_residual,
    jacobi_field_from_family,
    morse_index,
    morse_inequality_check,
    morse_series,
    orthogonal_amplitude,
    poincare_series_loop_sphere,
)
from riemann import ARCLENGTH, PathSample, euclidean_metric, sphere_metric


ORBITS = (-0.3, -0.2, 0.0, 0.3, 0.4)


def _line(grid):
    return PathSample(ARCLENGTH, grid, np.stack([grid, np.zeros_like(grid)], axis=-1), np.tile([1.0, 0.0], (len(grid), 1)))


def _normal_field(amplitude):
    return np.stack([np.zeros_like(amplitude), amplitude], axis=-1)


@pytest.fixture(scope="module")
def equator_fan():
    sphere = sphere_metric()
    family = geodesic_fan(sphere, np.array([np.pi / 2.0, 0.0]), np.array([0.0, 1.0]), 1e-10)
    grid = np.linspace(0.0, 4.0, 401)
    return sphere, family.member(0.0, grid), jacobi_field_from_family(family, 0.0, grid)


# ========================
# SPHERE
# ========================

def test_fan_field_on_the_equator_is_a_sine(equator_fan):
    _, path, J = equator_fan
    npt.assert_allclose(J[:, 0], -np.sin(path.grid), atol=1e-5)
    npt.assert_allclose(J[:, 1], 0.0, atol=1e-5)


def test_sine_solves_the_jacobi_equation(equator_fan):
    sphere, path, _ = equator_fan
    exact = _normal_field(np.zeros(len(path)))
    exact[:, 0] = -np.sin(path.grid)
    assert jacobi_equation_residual(sphere, path, exact) < 1e-3
    linear = np.stack([-path.grid, np.zeros(len(path))], axis=-1)
    assert jacobi_equation_residual(sphere, path, linear) > 0.1


def test_first_conjugate_point_on_the_sphere_is_antipodal(equator_fan):
    sphere, path, J = equator_fan
    records = conjugate_points(sphere, path, J)
    assert morse_index(records) == 1
    assert records[0].parameter_value == pytest.approx(np.pi, abs=1e-4)
    npt.assert_allclose(records[0].point, [np.pi / 2.0, np.pi], atol=1e-4)


# ========================
# ZERO DETECTION
# ========================

def test_silent_amplitude_is_noisy():
    s = np.linspace(0.0, 1.0, 101)
    with pytest.raises(NoisyAmplitude):
        conjugate_points(euclidean_metric(2), _line(s), np.zeros((101, 2)))
    amplitude = np.sin(np.pi * s)
    amplitude[30:60] = 0.0
    with pytest.raises(NoisyAmplitude):
        conjugate_points(euclidean_metric(2), _line(s), _normal_field(amplitude))


def test_amplitude_is_the_normal_component():
    s = np.linspace(0.0, 1.0, 11)
    J = np.stack([np.ones(11), 2.0 * s], axis=-1)
    npt.assert_allclose(orthogonal_amplitude(euclidean_metric(2), _line(s), J), 2.0 * s)


def test_zero_on_a_sample_counts_once():
    s = np.arange(101) / 100.0
    records = conjugate_points(euclidean_metric(2), _line(s), _normal_field(s - 0.5))
    assert len(records) == 1
    assert records[0].parameter_value == 0.5


def test_touching_zero_is_only_a_warning(caplog):
    s = np.arange(101) / 100.0
    with caplog.at_level(logging.WARNING, logger="morse"):
        records = conjugate_points(euclidean_metric(2), _line(s), _normal_field((s - 0.5) ** 2))
    assert records == []
    assert "touching zero" in caplog.text


def test_refined_zero_between_samples():
    s = np.linspace(0.0, 1.0, 51)
    records = conjugate_points(euclidean_metric(2), _line(s), _normal_field(s ** 3 - 0.37 ** 3))
    assert len(records) == 1
    assert records[0].parameter_value == pytest.approx(0.37, abs=1e-6)
    assert 0.0 < records[0].detection_margin < 1.0


def test_zero_near_the_far_end_is_kept():
    s = np.linspace(0.0, 1.0, 101)
    records = conjugate_points(euclidean_metric(2), _line(s), _normal_field(s - 0.995))
    assert len(records) == 1
    assert records[0].parameter_value == pytest.approx(0.995, abs=1e-6)


def test_zero_next_to_the_base_point_is_excluded():
    s = np.linspace(0.0, 1.0, 101)
    assert conjugate_points(euclidean_metric(2), _line(s), _normal_field(s - 0.005)) == []


def test_sphere_conjugate_point_is_stable_under_refinement():
    sphere = sphere_metric()
    family = geodesic_fan(sphere, np.array([np.pi / 2.0, 0.0]), np.array([0.0, 1.0]), 1e-10)
    found = []
    for samples in (201, 401):
        grid = np.linspace(0.0, 4.0, samples)
        found.append(conjugate_points(sphere, family.member(0.0, grid), jacobi_field_from_family(family, 0.0, grid)))
    coarse, fine = found
    assert len(coarse) == len(fine) == 1
    assert abs(coarse[0].parameter_value - fine[0].parameter_value) <= 4.0 / 200
    npt.assert_allclose(coarse[0].point, fine[0].point, atol=4.0 / 200)


# ========================
# FAMILIES
# ========================

def test_family_field_of_a_linear_family():
    family = SolutionFamily(
        generator=lambda a, grid: PathSample(
            ARCLENGTH, grid, np.stack([grid, a * grid ** 2], axis=-1), np.stack([np.ones_like(grid), 2 * a * grid], axis=-1)
        ),
        parameter_kind=ARCLENGTH,
    )
    grid = np.linspace(0.0, 1.0, 21)
    J = jacobi_field_from_family(family, 0.7, grid)
    npt.assert_allclose(J[:, 0], 0.0, atol=1e-10)
    npt.assert_allclose(J[:, 1], grid ** 2, atol=1e-8)


def test_family_guards():
    grid = np.linspace(0.0, 1.0, 5)

    def generator(a, g):
        return _line(g)

    bounded = SolutionFamily(generator=generator, parameter_kind=ARCLENGTH, a_domain=(0.0, 1.0))
    with pytest.raises(OutOfRange):
        jacobi_field_from_family(bounded, 1.0, grid)
    failing = SolutionFamily(generator=generator, parameter_kind=ARCLENGTH, residual=lambda path: 1.0)
    with pytest.raises(FamilyResidual):
        jacobi_field_from_family(failing, 0.0, grid)


def test_iterate_path():
    s = np.linspace(0.0, 1.0, 11)
    path = _line(s)
    tripled = iterate_path(path, 3)
    assert len(tripled) == 33
    assert tripled.grid[11] == pytest.approx(1.1)
    assert tripled.metadata["passes"] == 3
    npt.assert_array_equal(tripled.points[11:22], path.points)
    assert iterate_field(np.ones((11, 2)), 3).shape == (33, 2)
    with pytest.raises(GridMismatch):
        iterate_path(path, 2, period=0.5)
    with pytest.raises(ValueError):
        iterate_path(path, 0)


# ========================
# FORMAL SERIES
# ========================

def test_formal_series_arithmetic():
    geometric = FormalSeries.geometric(1, 4)
    assert (geometric * FormalSeries.polynomial([1, -1], 4)).coefficients == (1, 0, 0, 0, 0)
    assert FormalSeries.one(4).shift(2).coefficients == (0, 0, 1, 0, 0)
    assert (geometric - FormalSeries.one(4)).coefficients == (0, 1, 1, 1, 1)
    assert str(FormalSeries.polynomial([1, 0, 2], 2)) == "1 + 2t^2"
    with pytest.raises(TruncationMismatch):
        FormalSeries((1, 2), 2)
    with pytest.raises(TruncationMismatch):
        geometric + FormalSeries.one(3)


def test_morse_series_of_the_iterated_loop():
    contributions = [([1], 0)] + [([1, 1], 2 * p - 1) for p in range(1, 5)]
    series = morse_series(contributions, 7)
    assert series.coefficients == (1,) * 8
    assert series == poincare_series_loop_sphere(2, 7)
    assert morse_inequality_check(series, poincare_series_loop_sphere(2, 7))


def test_morse_series_guards():
    with pytest.raises(TruncationOverflow):
        morse_series([(FormalSeries.geometric(1, 3), 0)], 5)
    with pytest.raises(ValueError):
        morse_series([([1], -1)], 3)
    assert morse_series([(FormalSeries.geometric(2, 6), 1)], 4).coefficients == (0, 1, 0, 1, 0)


def test_poincare_series_and_inequality():
    assert poincare_series_loop_sphere(3, 5).coefficients == (1, 0, 1, 0, 1, 0)
    with pytest.raises(Unsupported):
        poincare_series_loop_sphere(4, 5)
    short = FormalSeries.polynomial([1, 1, 1], 3)
    assert not morse_inequality_check(short, poincare_series_loop_sphere(2, 3))
    assert morse_inequality_check(short, poincare_series_loop_sphere(3, 3))
    with pytest.raises(TruncationMismatch):
        morse_inequality_check(short, poincare_series_loop_sphere(2, 4))


# ========================
# GARNIER LOOPS
# ========================

@pytest.mark.parametrize("a", ORBITS)
def test_single_loop_has_one_conjugate_point_at_the_focus(model, loop_s_grid, a):
    geodesic = solve_separatrix_geodesic(model, a, loop_s_grid)
    J = jacobi_field_from_family(separatrix_family(model), a, loop_s_grid)
    records = conjugate_points(garnier_jacobi_metric(model), geodesic, J)
    assert morse_index(records) == 1
    assert records[0].parameter_value == pytest.approx(0.0, abs=1e-3)
    npt.assert_allclose(records[0].point, focus_point(model), atol=1e-3)


def test_focus_is_stable_under_refinement(model, loop_s_grid):
    found = []
    for grid in (loop_s_grid, loop_grid(model, 2 * len(loop_s_grid))):
        geodesic = solve_separatrix_geodesic(model, 0.3, grid)
        J = jacobi_field_from_family(separatrix_family(model), 0.3, grid)
        found.append(conjugate_points(garnier_jacobi_metric(model), geodesic, J))
    coarse, fine = found
    step = loop_s_grid[1] - loop_s_grid[0]
    assert len(coarse) == len(fine) == 1
    assert abs(coarse[0].parameter_value - fine[0].parameter_value) <= step
    npt.assert_allclose(coarse[0].point, fine[0].point, atol=step)


def test_iterated_loop_index(model, loop_s_grid):
    geodesic = solve_separatrix_geodesic(model, 0.3, loop_s_grid)
    J = jacobi_field_from_family(separatrix_family(model), 0.3, loop_s_grid)
    twice = iterate_path(geodesic, 2, loop_length(model))
    records = conjugate_points(garnier_jacobi_metric(model), twice, iterate_field(J, 2))
    assert morse_index(records) == 3
    assert records[1].parameter_value == pytest.approx(0.5 * loop_length(model), abs=0.1)


@pytest.mark.parametrize("a", ORBITS)
def test_newton_picture_finds_the_same_focus(model, loop_s_grid, a):
    span = newton_family_path(model, a, loop_s_grid).grid
    trim = TIME_TRIM * (span[-1] - span[0])
    t_grid = np.linspace(span[0] + trim, span[-1] - trim, len(loop_s_grid))
    path = newton_family_path(model, a, loop_s_grid, t_grid)
    J = jacobi_field_from_family(newton_family(model, loop_s_grid, t_grid), a, t_grid)
    records = conjugate_points(natural_system(model).metric, path, J)
    assert morse_index(records) == 1
    assert records[0].parameter_value == pytest.approx(0.0, abs=1e-3)
    npt.assert_allclose(records[0].point, focus_point(model), atol=1e-3)

    twice = conjugate_points(natural_system(model).metric, iterate_path(path, 2), iterate_field(J, 2))
    assert morse_index(twice) == 3
