"""Shared fixtures: the σ = 0.5 Garnier model and its closed-form Newton solutions."""

import numpy as np
import pytest

from garnier import EDGE_ELLIPSE, EDGE_Q2ZERO, GarnierModel, loop_grid, singular_solution_time, singular_velocity_time
from riemann import TIME, PathSample


def closed_form_path(model: GarnierModel, branch: str, span: tuple, samples: int) -> PathSample:
    t = np.linspace(*span, samples)
    points = singular_solution_time(model, branch, t)
    velocities = singular_velocity_time(model, branch, t)
    energies = np.array([0.5 * v @ v + model.potential(q) for q, v in zip(points, velocities)])
    return PathSample(TIME, t, points, velocities, energies, {"branch": branch})


@pytest.fixture(scope="session")
def model():
    return GarnierModel(0.5)


@pytest.fixture(scope="session")
def newton_path():
    """Factory for closed-form separatrix solutions sampled in time."""
    return closed_form_path


@pytest.fixture(scope="session")
def tk1_path(model):
    return closed_form_path(model, EDGE_Q2ZERO, (-3.0, 3.0), 401)


@pytest.fixture(scope="session")
def tk2_path(model):
    return closed_form_path(model, EDGE_ELLIPSE, (-3.0, 3.0), 401)


@pytest.fixture(scope="session")
def loop_s_grid(model):
    # even sample count keeps s = 0 (the focus) off the grid
    return loop_grid(model, 160)
