"""
Natural systems (T − U): Newton flow, energy bookkeeping, the Jacobi
metric h = 2(i₁ − U) g and the time ↔ Jacobi arc-length reparametrization.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline

from config import DEGENERACY_RATIO, ENERGY_TOL, FD_STEP, JACOBI_SPEED_FACTOR
from errors import DegenerateFactor, EnergyMismatch, GridMismatch
from numerics import cumulative_hermite
from riemann import (
    ARCLENGTH,
    TIME,
    ChartDomain,
    MetricField,
    PathSample,
    christoffel,
    conformal_transform,
    covariant_derivative_along,
    inner,
    metric_inverse,
    norm,
    run_ivp,
)

logger = logging.getLogger(__name__)

__all__ = [
    "NaturalSystem",
    "PathSample",
    "newton_rhs",
    "integrate_trajectory",
    "energy",
    "time_to_arclength",
    "arclength_to_time",
    "jacobi_factor",
    "jacobi_metric",
    "newton_residual",
    "truncate_admissible",
    "resample",
    "constant_potential_system",
]


@dataclass(frozen=True)
class NaturalSystem:
    metric: MetricField
    potential: Callable[[np.ndarray], float]
    grad_potential: Optional[Callable[[np.ndarray], np.ndarray]] = None
    energy_constant: float = 0.0
    name: str = "system"
    # where the Jacobi metric is usable (i₁ − U bounded away from 0); defaults to the chart of g
    jacobi_domain: Optional[ChartDomain] = None


def potential_gradient(system: NaturalSystem, p: np.ndarray) -> np.ndarray:
    """grad U as a vector (index raised with g)."""
    p = np.asarray(p, dtype=float)
    if system.grad_potential is not None:
        return np.asarray(system.grad_potential(p), dtype=float)
    dim = system.metric.dim
    dU = np.empty(dim)
    for l in range(dim):
        h = FD_STEP * max(1.0, abs(p[l]))
        e = np.zeros(dim)
        e[l] = h
        dU[l] = (system.potential(p + e) - system.potential(p - e)) / (2.0 * h)
    return metric_inverse(system.metric, p) @ dU


def newton_rhs(system: NaturalSystem, p: np.ndarray, v: np.ndarray, check: bool = True) -> np.ndarray:
    """Coordinate form of Dγ̇/dt = −grad U."""
    v = np.asarray(v, dtype=float)
    return -np.einsum("kij,i,j->k", christoffel(system.metric, p, check=check), v, v) - potential_gradient(system, p)


def energy(system: NaturalSystem, p: np.ndarray, v: np.ndarray) -> float:
    return 0.5 * inner(system.metric, p, v, v) + float(system.potential(np.asarray(p, dtype=float)))


def integrate_trajectory(
    system: NaturalSystem,
    p0: np.ndarray,
    v0: np.ndarray,
    span: tuple,
    tol: float,
    samples: Optional[int] = None,
) -> PathSample:
    """
    Integrate Newton's equations over a time span.

    The returned path records per-sample energies; metadata carries the
    energy drift and its bound 100·tol·|span|.
    """
    dim = system.metric.dim

    def rhs(_t, y):
        return np.concatenate([y[dim:], newton_rhs(system, y[:dim], y[dim:], check=False)])

    path = run_ivp(
        rhs, system.metric.domain, dim, p0, v0, span, tol, samples, TIME,
        lambda p, v: energy(system, p, v),
    )
    drift = float(np.max(np.abs(path.energies - path.energies[0])))
    bound = 100.0 * tol * abs(span[1] - span[0])
    if drift > bound:
        logger.warning("energy drift %.3e exceeds bound %.3e", drift, bound)
    return replace(path, metadata=dict(path.metadata, energy_drift=drift, drift_bound=bound))


# ========================
# JACOBI METRIC
# ========================

def jacobi_factor(system: NaturalSystem, p: np.ndarray) -> float:
    """2(i₁ − U(p))."""
    return 2.0 * (system.energy_constant - float(system.potential(np.asarray(p, dtype=float))))


def jacobi_metric(system: NaturalSystem) -> MetricField:
    """
    h = 2(i₁ − U) g.

    With analytic Christoffels of g and an analytic grad U the result carries
    Γᴶ = Γ + ½(δᵏ_i w_j + δᵏ_j w_i − g_ij gᵏˡ w_l), w = d ln 2(i₁ − U).
    """
    base = system.metric
    override = None
    if base.christoffel_fn is not None and system.grad_potential is not None:
        def override(p):
            f = jacobi_factor(system, p)
            grad = np.asarray(system.grad_potential(p), dtype=float)
            g = np.asarray(base.components(p), dtype=float)
            w = -2.0 * (g @ grad) / f
            eye = np.eye(base.dim)
            correction = 0.5 * (np.einsum("ki,j->kij", eye, w) + np.einsum("kj,i->kij", eye, w))
            correction += np.einsum("ij,k->kij", g, grad) / f
            return np.asarray(base.christoffel_fn(p), dtype=float) + correction

    metric = conformal_transform(
        base, lambda p: jacobi_factor(system, p), christoffel_override=override, name=f"jacobi({system.name})"
    )
    if system.jacobi_domain is not None:
        metric = replace(metric, domain=system.jacobi_domain)
    return metric


def _factor_profile(system: NaturalSystem, path: PathSample, floor: Optional[float]) -> np.ndarray:
    gap = np.array([system.energy_constant - system.potential(p) for p in path.points])
    if floor is None:
        floor = DEGENERACY_RATIO * float(np.max(gap))
    if np.min(gap) < floor:
        raise DegenerateFactor(
            "Jacobi factor falls below the degeneracy floor along the path",
            floor=floor, minimum=float(np.min(gap)), index=int(np.argmin(gap)),
        )
    return JACOBI_SPEED_FACTOR * gap


def _potential_rate(system: NaturalSystem, points: np.ndarray, velocities: np.ndarray) -> np.ndarray:
    """dU/dt = g(grad U, γ̇) per sample."""
    return np.array([inner(system.metric, p, potential_gradient(system, p), v) for p, v in zip(points, velocities)])


def _anchor(grid: np.ndarray, cumulative: np.ndarray, slopes: np.ndarray, origin: float) -> float:
    if len(grid) < 2 or not grid[0] <= origin <= grid[-1]:
        return 0.0
    return float(CubicHermiteSpline(grid, cumulative, slopes)(origin))


def time_to_arclength(
    system: NaturalSystem,
    path: PathSample,
    origin: float = 0.0,
    energy_tol: float = ENERGY_TOL,
    floor: Optional[float] = None,
) -> PathSample:
    """
    Reparametrize a Newton solution by Jacobi arc-length, ds/dt = 2(i₁ − U).

    s is measured from time `origin` when it lies on the grid, else from the
    first sample. Tangents become γ' = γ̇/(ds/dt), of unit h-length on-shell.

    Raises:
        EnergyMismatch: The path energy is not i₁.
        DegenerateFactor: i₁ − U drops below the degeneracy floor.
    """
    if path.parameter_kind != TIME:
        raise GridMismatch("expected a time-parametrized path", kind=path.parameter_kind)
    energies = path.energies
    if energies is None:
        energies = np.array([energy(system, p, v) for p, v in zip(path.points, path.tangents)])
    bound = max(energy_tol, path.metadata.get("drift_bound", 0.0))
    mismatch = float(np.max(np.abs(energies - system.energy_constant)))
    if mismatch > bound:
        raise EnergyMismatch(
            f"path energy differs from i1={system.energy_constant!r} by {mismatch:.3e}",
            mismatch=mismatch, bound=bound,
        )

    speed = _factor_profile(system, path, floor)
    rate = -JACOBI_SPEED_FACTOR * _potential_rate(system, path.points, path.tangents)
    cumulative = cumulative_hermite(path.grid, speed, rate)
    t_origin = origin if path.grid[0] <= origin <= path.grid[-1] else float(path.grid[0])
    s = cumulative - _anchor(path.grid, cumulative, speed, t_origin)
    if len(s) > 1 and np.any(np.diff(s) <= 0.0):
        raise DegenerateFactor("arc-length is not strictly increasing")

    metadata = dict(path.metadata)
    metadata.update(t_origin=float(t_origin), t_range=(float(path.grid[0]), float(path.grid[-1])))
    return PathSample(ARCLENGTH, s, path.points, path.tangents / speed[:, None], energies, metadata)


def arclength_to_time(
    system: NaturalSystem,
    path: PathSample,
    t_origin: Optional[float] = None,
    energy_tol: float = ENERGY_TOL,
    floor: Optional[float] = None,
) -> PathSample:
    """
    Inverse of time_to_arclength: dt/ds = 1/(2(i₁ − U)).

    s = 0 maps to `t_origin` (default: the origin recorded by the forward
    map, else 0); a grid not containing s = 0 is anchored at its first sample.
    """
    if path.parameter_kind != ARCLENGTH:
        raise GridMismatch("expected an arc-length parametrized path", kind=path.parameter_kind)
    if t_origin is None:
        t_origin = float(path.metadata.get("t_origin", 0.0))

    speed = _factor_profile(system, path, floor)
    velocities = path.tangents * speed[:, None]
    energies = np.array([energy(system, p, v) for p, v in zip(path.points, velocities)])
    mismatch = float(np.max(np.abs(energies - system.energy_constant)))
    if mismatch > energy_tol:
        raise EnergyMismatch(
            f"path energy differs from i1={system.energy_constant!r} by {mismatch:.3e}",
            mismatch=mismatch, bound=energy_tol,
        )

    inverse = 1.0 / speed
    # d(1/f)/ds = −(df/dt)/f³
    rate = JACOBI_SPEED_FACTOR * _potential_rate(system, path.points, velocities) / speed ** 3
    cumulative = cumulative_hermite(path.grid, inverse, rate)
    t = t_origin + cumulative - _anchor(path.grid, cumulative, inverse, 0.0)

    metadata = dict(path.metadata)
    metadata["t_origin"] = float(t_origin)
    return PathSample(TIME, t, path.points, velocities, energies, metadata)


# ========================
# PATH UTILITIES
# ========================

def newton_residual(system: NaturalSystem, path: PathSample) -> np.ndarray:
    """Per-sample g-norm of Dγ̇/dt + grad U."""
    acceleration = covariant_derivative_along(system.metric, path, path.tangents)
    return np.array([
        norm(system.metric, p, a + potential_gradient(system, p)) for p, a in zip(path.points, acceleration)
    ])


def truncate_admissible(system: NaturalSystem, path: PathSample, floor: Optional[float] = None) -> PathSample:
    """
    Largest contiguous piece of the path around its deepest admissible
    sample on which i₁ − U stays above the degeneracy floor.
    """
    gap = np.array([system.energy_constant - system.potential(p) for p in path.points])
    if floor is None:
        floor = DEGENERACY_RATIO * float(np.max(gap))
    centre = int(np.argmax(gap))
    lo = centre
    while lo > 0 and gap[lo - 1] >= floor:
        lo -= 1
    hi = centre
    while hi < len(gap) - 1 and gap[hi + 1] >= floor:
        hi += 1
    if lo == 0 and hi == len(gap) - 1:
        return path
    logger.info("truncated path to samples [%d, %d] of %d at floor %.3e", lo, hi, len(gap), floor)
    energies = path.energies[lo:hi + 1] if path.energies is not None else None
    metadata = dict(path.metadata, truncated=(lo, hi), floor=floor)
    return PathSample(
        path.parameter_kind, path.grid[lo:hi + 1], path.points[lo:hi + 1], path.tangents[lo:hi + 1], energies, metadata
    )


def resample(path: PathSample, grid: np.ndarray) -> PathSample:
    """Hermite resampling of points (with the recorded tangents) onto a new grid."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] < path.grid[0] - 1e-12 or grid[-1] > path.grid[-1] + 1e-12:
        raise GridMismatch("resampling grid extends beyond the path", low=float(grid[0]), high=float(grid[-1]))
    points = CubicHermiteSpline(path.grid, path.points, path.tangents, axis=0)(grid)
    tangents = CubicSpline(path.grid, path.tangents, axis=0)(grid)
    energies = CubicSpline(path.grid, path.energies)(grid) if path.energies is not None else None
    return replace(path, grid=grid, points=points, tangents=tangents, energies=energies, metadata=dict(path.metadata))


def constant_potential_system(metric: MetricField, level: float = 0.0, i1: float = 1.0) -> NaturalSystem:
    """U ≡ level; the Jacobi factor is the constant 2(i1 − level)."""
    return NaturalSystem(
        metric=metric,
        potential=lambda p: level,
        grad_potential=lambda p: np.zeros(metric.dim),
        energy_constant=i1,
        name="constant",
    )

