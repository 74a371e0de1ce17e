"""
Second-variation quadratic forms along extremals.

    δ²S    natural action along a Newton solution (metric g, potential U)
    δ²S₀ᴶ  free action of the Jacobi metric h along its geodesic
    δ²Lᴶ   Jacobi length

All forms are evaluated in first-derivative form. The Jacobi-metric forms
accept a path in either parametrization: a time-parametrized Newton
solution is integrated against ds = 2(i₁ − U) dt, so the same geometric
field V can be compared across the two pictures on one grid.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from config import DEFAULT_SEED, EXTREMAL_TOL, FD_STEP, FJ_CONSTANT, JACOBI_SPEED_FACTOR, ORTHOGONALITY_TOL, TANGENT_FLOOR
from dynamics import NaturalSystem, arclength_to_time, jacobi_metric, newton_residual, potential_gradient
from errors import GridMismatch, ImproperVariation, NotAnExtremal, ZeroTangent
from numerics import grid_derivative, integrate
from riemann import (
    ARCLENGTH,
    TIME,
    MetricField,
    PathSample,
    christoffel,
    covariant_derivative_along,
    curvature_operator,
    metric_tensor,
)

logger = logging.getLogger(__name__)

GENERAL = "general"
ORTHOGONAL = "orthogonal"


@dataclass(frozen=True)
class VariationField:
    """A proper variation: vector samples along `path`, zero at both ends."""
    path: PathSample
    values: np.ndarray
    kind: str = GENERAL

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        if values.shape != self.path.points.shape:
            raise GridMismatch(
                "variation is not sampled on the path grid",
                values=list(values.shape), path=list(self.path.points.shape),
            )
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(values[0])) > 1e-12 * scale or np.max(np.abs(values[-1])) > 1e-12 * scale:
            raise ImproperVariation("variation does not vanish at both endpoints")
        if self.kind not in (GENERAL, ORTHOGONAL):
            raise ValueError(f"unknown variation kind '{self.kind}'")

    def on(self, path: PathSample) -> "VariationField":
        """The same geometric field attached to a reparametrized copy of its path."""
        return VariationField(path, self.values, self.kind)

    def scaled(self, alpha: float) -> "VariationField":
        return VariationField(self.path, alpha * self.values, self.kind)


@dataclass(frozen=True)
class QuadraticFormReport:
    value: float
    discretization_estimate: float


# ========================
# SAMPLE HELPERS
# ========================

def _gram(metric: MetricField, points: np.ndarray) -> np.ndarray:
    return np.array([metric_tensor(metric, p) for p in points])


def _dot(gram: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("nij,ni,nj->n", gram, u, v)


def _curvature_term(metric: MetricField, gram: np.ndarray, points, tangents, values) -> np.ndarray:
    """⟨R(T, V)T, V⟩ per sample."""
    out = np.empty(len(points))
    for n, p in enumerate(points):
        if not np.any(values[n]):
            out[n] = 0.0
            continue
        out[n] = values[n] @ gram[n] @ curvature_operator(metric, p, tangents[n], values[n])
    return out


def _hessian_term(system: NaturalSystem, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """⟨∇_V grad U, V⟩_g per sample."""
    out = np.empty(len(points))
    for n, (p, v) in enumerate(zip(points, values)):
        size = float(np.linalg.norm(v))
        if size == 0.0:
            out[n] = 0.0
            continue
        eps = FD_STEP * max(1.0, float(np.linalg.norm(p)))
        direction = v / size
        derivative = (potential_gradient(system, p + eps * direction) - potential_gradient(system, p - eps * direction)) / (2.0 * eps)
        nabla = size * derivative + np.einsum("kij,i,j->k", christoffel(system.metric, p), v, potential_gradient(system, p))
        out[n] = v @ metric_tensor(system.metric, p) @ nabla
    return out


def _subsample(variation: VariationField) -> VariationField:
    """Every other sample, always keeping the last one."""
    n = len(variation.path)
    idx = np.arange(0, n, 2)
    if idx[-1] != n - 1:
        idx = np.append(idx, n - 1)
    path = variation.path
    energies = path.energies[idx] if path.energies is not None else None
    coarse = PathSample(path.parameter_kind, path.grid[idx], path.points[idx], path.tangents[idx], energies, dict(path.metadata))
    return VariationField(coarse, variation.values[idx], variation.kind)


def _report(integrand, variation: VariationField) -> QuadraticFormReport:
    value = integrate(variation.path.grid, integrand(variation))
    if len(variation.path) < 5:
        return QuadraticFormReport(value, 0.0)
    coarse = _subsample(variation)
    estimate = value - integrate(coarse.path.grid, integrand(coarse))
    return QuadraticFormReport(float(value), float(estimate))


def _as_time(system: NaturalSystem, variation: VariationField) -> VariationField:
    if variation.path.parameter_kind == TIME:
        return variation
    return variation.on(arclength_to_time(system, variation.path))


def _speed_ratio(system: NaturalSystem, path: PathSample) -> np.ndarray:
    """ds/dτ along the path's own parameter τ."""
    if path.parameter_kind == ARCLENGTH:
        return np.ones(len(path))
    gap = np.array([system.energy_constant - system.potential(p) for p in path.points])
    return JACOBI_SPEED_FACTOR * gap


def _interior(n: int) -> slice:
    return slice(1, n - 1) if n > 2 else slice(0, n)


def require_newton_extremal(system: NaturalSystem, path: PathSample, tol: float = EXTREMAL_TOL) -> None:
    """Relative residual of Dγ̇/dt = −grad U on the interior samples."""
    residual = newton_residual(system, path)[_interior(len(path))]
    scale = 1.0 + max(float(np.max(np.abs(grid_derivative(path.grid, path.tangents)))), 0.0)
    worst = float(np.max(residual)) / scale if len(residual) else 0.0
    if worst > tol:
        raise NotAnExtremal(f"Newton residual {worst:.3e} exceeds {tol:.1e}", residual=worst, tol=tol)


def require_geodesic(metric: MetricField, path: PathSample, tol: float = EXTREMAL_TOL) -> None:
    """Relative residual of ∇_γ'γ' = 0 on the interior samples."""
    acceleration = covariant_derivative_along(metric, path, path.tangents)
    raw = grid_derivative(path.grid, path.tangents)
    gram = _gram(metric, path.points)
    residual = np.sqrt(np.abs(_dot(gram, acceleration, acceleration)))
    scale = 1.0 + np.sqrt(np.abs(_dot(gram, raw, raw)))
    inside = _interior(len(path))
    worst = float(np.max(residual[inside] / scale[inside])) if len(path) > 2 else 0.0
    if worst > tol:
        raise NotAnExtremal(f"geodesic residual {worst:.3e} exceeds {tol:.1e}", residual=worst, tol=tol)


def _require_jacobi_extremal(system: NaturalSystem, path: PathSample, metric: MetricField, tol: float) -> None:
    if path.parameter_kind == TIME:
        require_newton_extremal(system, path, tol)
    else:
        require_geodesic(metric, path, tol)


# ========================
# QUADRATIC FORMS
# ========================

def second_variation_S(
    system: NaturalSystem, path: PathSample, V: VariationField, tol: float = EXTREMAL_TOL
) -> QuadraticFormReport:
    """
    δ²S = ∫ ⟨DV/dt, DV/dt⟩ − ⟨R(γ̇, V)γ̇, V⟩ − ⟨∇_V grad U, V⟩ dt.

    An arc-length path is first mapped back to time.
    """
    V = _as_time(system, V.on(path))
    require_newton_extremal(system, V.path, tol)

    def integrand(field: VariationField) -> np.ndarray:
        path = field.path
        gram = _gram(system.metric, path.points)
        dV = covariant_derivative_along(system.metric, path, field.values)
        return (
            _dot(gram, dV, dV)
            - _curvature_term(system.metric, gram, path.points, path.tangents, field.values)
            - _hessian_term(system, path.points, field.values)
        )

    return _report(integrand, V)


def _jacobi_integrand(system: NaturalSystem, metric: MetricField, field: VariationField, length: bool) -> np.ndarray:
    path = field.path
    ratio = _speed_ratio(system, path)
    gram = _gram(metric, path.points)
    dV = covariant_derivative_along(metric, path, field.values)
    value = _dot(gram, dV, dV) - _curvature_term(metric, gram, path.points, path.tangents, field.values)
    if length:
        along = _dot(gram, dV, path.tangents)
        value = value - along ** 2 / _dot(gram, path.tangents, path.tangents)
    return value / ratio


def second_variation_S0J(
    system: NaturalSystem, path: PathSample, V: VariationField, tol: float = EXTREMAL_TOL
) -> QuadraticFormReport:
    """δ²S₀ᴶ = ∫ ‖DᴶV/ds‖²_h − ⟨Rᴶ(γ', V)γ', V⟩_h ds."""
    V = V.on(path)
    h = jacobi_metric(system)
    _require_jacobi_extremal(system, V.path, h, tol)
    return _report(lambda field: _jacobi_integrand(system, h, field, length=False), V)


def second_variation_LJ(
    system: NaturalSystem, path: PathSample, V: VariationField, tol: float = EXTREMAL_TOL
) -> QuadraticFormReport:
    """
    δ²Lᴶ: the free-action form with the tangential part of DᴶV/ds removed,
    so only the h-orthogonal component of V contributes.
    """
    V = V.on(path)
    h = jacobi_metric(system)
    _require_jacobi_extremal(system, V.path, h, tol)
    return _report(lambda field: _jacobi_integrand(system, h, field, length=True), V)


def hessian_operator_form(
    system: NaturalSystem, path: PathSample, V: VariationField, tol: float = EXTREMAL_TOL
) -> QuadraticFormReport:
    """∫⟨Δ̄V, V⟩ dt with Δ̄V = −D²V/dt² − R(γ̇, V)γ̇ − ∇_V grad U."""
    V = _as_time(system, V.on(path))
    require_newton_extremal(system, V.path, tol)

    def integrand(field: VariationField) -> np.ndarray:
        path = field.path
        gram = _gram(system.metric, path.points)
        dV = covariant_derivative_along(system.metric, path, field.values)
        ddV = covariant_derivative_along(system.metric, path, dV)
        return (
            -_dot(gram, ddV, field.values)
            - _curvature_term(system.metric, gram, path.points, path.tangents, field.values)
            - _hessian_term(system, path.points, field.values)
        )

    return _report(integrand, V)


# ========================
# IDENTITIES
# ========================

def _log_factor_rate(system: NaturalSystem, points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """⟨F, V⟩_g = V(ln 2(i₁ − U)) per sample."""
    out = np.empty(len(points))
    for n, (p, v) in enumerate(zip(points, values)):
        f = JACOBI_SPEED_FACTOR * (system.energy_constant - system.potential(p))
        out[n] = -JACOBI_SPEED_FACTOR * (v @ metric_tensor(system.metric, p) @ potential_gradient(system, p)) / f
    return out


def theorem1_correction(system: NaturalSystem, V: VariationField) -> float:
    """∫ 2⟨γ̇, DV/dt⟩⟨F, V⟩ dt with F = grad ln 2(i₁ − U)."""
    path = V.path
    gram = _gram(system.metric, path.points)
    dV = covariant_derivative_along(system.metric, path, V.values)
    integrand = 2.0 * _dot(gram, path.tangents, dV) * _log_factor_rate(system, path.points, V.values)
    return integrate(path.grid, integrand)


def theorem1_residual(system: NaturalSystem, newton_path: PathSample, V: VariationField) -> float:
    """|δ²S₀ᴶ − δ²S − ∫ 2⟨γ̇, DV/dt⟩⟨F, V⟩ dt| on a Newton solution."""
    V = _as_time(system, V.on(newton_path))
    free = second_variation_S0J(system, V.path, V).value
    natural = second_variation_S(system, V.path, V).value
    residual = abs(free - natural - theorem1_correction(system, V))
    logger.debug("theorem 1: S0J=%.12g S=%.12g residual=%.3e", free, natural, residual)
    return residual


def theorem2_correction(system: NaturalSystem, V: VariationField) -> float:
    """∫ [⟨∇_γ̇γ̇, V⟩ − ⟨γ̇, ∇_γ̇V⟩]² / 2(i₁ − U) dt, with ∇_γ̇γ̇ = −grad U on shell."""
    path = V.path
    gram = _gram(system.metric, path.points)
    dV = covariant_derivative_along(system.metric, path, V.values)
    acceleration = -np.array([potential_gradient(system, p) for p in path.points])
    bracket = _dot(gram, acceleration, V.values) - _dot(gram, path.tangents, dV)
    factor = JACOBI_SPEED_FACTOR * np.array([system.energy_constant - system.potential(p) for p in path.points])
    return integrate(path.grid, bracket ** 2 / factor)


def theorem2_residual(system: NaturalSystem, newton_path: PathSample, V: VariationField) -> float:
    """|δ²Lᴶ − δ²S + ∫ [⟨∇_γ̇γ̇, V⟩ − ⟨γ̇, ∇_γ̇V⟩]² / 2(i₁ − U) dt|."""
    V = _as_time(system, V.on(newton_path))
    length = second_variation_LJ(system, V.path, V).value
    natural = second_variation_S(system, V.path, V).value
    residual = abs(length - natural + theorem2_correction(system, V))
    logger.debug("theorem 2: LJ=%.12g S=%.12g residual=%.3e", length, natural, residual)
    return residual


@dataclass(frozen=True)
class IdentityReport:
    """The three quadratic forms of one variation and both identity residuals."""
    natural: float
    free: float
    length: float
    theorem1: float
    theorem2: float

    @property
    def scale(self) -> float:
        return max(abs(self.natural), abs(self.free), abs(self.length), np.finfo(float).tiny)

    @property
    def theorem1_relative(self) -> float:
        return self.theorem1 / self.scale

    @property
    def theorem2_relative(self) -> float:
        return self.theorem2 / self.scale


def identity_report(
    system: NaturalSystem, newton_path: PathSample, V: VariationField, tol: float = EXTREMAL_TOL
) -> IdentityReport:
    """Both identities for one variation, sharing the forms between them."""
    V = _as_time(system, V.on(newton_path))
    natural = second_variation_S(system, V.path, V, tol).value
    free = second_variation_S0J(system, V.path, V, tol).value
    length = second_variation_LJ(system, V.path, V, tol).value
    return IdentityReport(
        natural=natural,
        free=free,
        length=length,
        theorem1=abs(free - natural - theorem1_correction(system, V)),
        theorem2=abs(length - natural + theorem2_correction(system, V)),
    )


def orthogonal_correction(system: NaturalSystem, V: VariationField, constant: float = FJ_CONSTANT) -> float:
    """∫ (h(Fᴶ, V))² ds with Fᴶ = grad_h (constant · ln 2(i₁ − U))."""
    V = _as_time(system, V)
    rate = constant * _log_factor_rate(system, V.path.points, V.values)
    return integrate(V.path.grid, rate ** 2 * _speed_ratio(system, V.path))


def orthogonal_identity_residual(
    system: NaturalSystem, geodesic_path: PathSample, V_orth: VariationField, constant: float = FJ_CONSTANT
) -> float:
    """|δ²S − δ²Lᴶ − ∫(h(Fᴶ, V))² ds| for an h-orthogonal proper variation."""
    V = _as_time(system, V_orth.on(geodesic_path))
    natural = second_variation_S(system, V.path, V).value
    length = second_variation_LJ(system, V.path, V).value
    return abs(natural - length - orthogonal_correction(system, V, constant))


def calibrate_fj_constant(
    system: NaturalSystem,
    path: PathSample,
    fields: Iterable[VariationField],
    candidates: Sequence[float] = (0.5, 1.0),
) -> tuple:
    """
    Pick the constant in Fᴶ = grad_h(c·ln 2(i₁ − U)) that best closes the
    orthogonal identity over a validation family.

    Returns:
        tuple: (best constant, {constant: summed relative residual})
    """
    h = jacobi_metric(system)
    fields = [project_orthogonal(h, field.path, field).on(path) for field in fields]
    scores = {}
    for c in candidates:
        total = 0.0
        for field in fields:
            V = _as_time(system, field)
            natural = second_variation_S(system, V.path, V).value
            length = second_variation_LJ(system, V.path, V).value
            scale = max(abs(natural), abs(length), 1.0)
            total += abs(natural - length - orthogonal_correction(system, V, c)) / scale
        scores[float(c)] = total
    best = min(scores, key=scores.get)
    logger.info("F^J constant calibration: %s -> %r", scores, best)
    return best, scores


# ========================
# FIELDS
# ========================

def project_orthogonal(metric: MetricField, path: PathSample, V: VariationField) -> VariationField:
    """Pointwise Gram–Schmidt of V against the path tangent in `metric`."""
    values = np.array(V.values, dtype=float)
    gram = _gram(metric, path.points)
    tt = _dot(gram, path.tangents, path.tangents)
    if np.any(np.sqrt(np.abs(tt)) < TANGENT_FLOOR):
        bad = int(np.argmin(tt))
        raise ZeroTangent("tangent vanishes along the path", index=bad, parameter=float(path.grid[bad]))
    values -= (_dot(gram, values, path.tangents) / tt)[:, None] * path.tangents
    values[0] = 0.0
    values[-1] = 0.0
    leftover = np.abs(_dot(gram, values, path.tangents)) / np.sqrt(tt)
    if np.max(leftover) > ORTHOGONALITY_TOL * max(1.0, float(np.max(np.abs(values)))):
        logger.warning("orthogonal projection left a tangential residue of %.3e", float(np.max(leftover)))
    return VariationField(path, values, ORTHOGONAL)


def random_bump_field(
    path: PathSample,
    seed: int = DEFAULT_SEED,
    modes: Optional[int] = None,
    amplitude: float = 1.0,
    rng: Optional[np.random.Generator] = None,
) -> VariationField:
    """
    Smooth proper variation: per component, a sum of 3 to 7 sine modes
    over the path parameter with seeded coefficients decaying like 1/k.
    """
    rng = rng if rng is not None else np.random.default_rng(seed)
    x = (path.grid - path.grid[0]) / (path.grid[-1] - path.grid[0])
    values = np.zeros_like(path.points)
    for component in range(path.dim):
        count = modes if modes is not None else int(rng.integers(3, 8))
        for k in range(1, count + 1):
            values[:, component] += rng.normal() / k * np.sin(k * np.pi * x)
    values *= amplitude
    values[0] = 0.0
    values[-1] = 0.0
    return VariationField(path, values)
