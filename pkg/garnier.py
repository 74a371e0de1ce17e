"""
The Garnier N=2 system on its separatrix level i₁ = i₂ = 0.

Cartesian coordinates q = (x, y) carry the numerics; the Jacobi elliptic
chart (μ₁, μ₂), 0 ≤ μ₁ ≤ σ̄² ≤ μ₂ ≤ 1, carries the closed forms. Writing
uᵢ = √(1 − μᵢ), the chart reads

    x = ±u₁u₂/σ,   y² = (u₁² − σ²)(σ² − u₂²)/σ²,

so ξ = u₁ ∈ [σ, 1] and a signed η (|η| = u₂ ∈ [0, σ]) are planar elliptic
coordinates with foci (±σ, 0). Loops based at D = (1, 0) are followed
in the smooth separatrix coordinates x = σ cosh α cos β, y = σ sinh α sin β.

Every loop based at D crosses the far focus F = (−σ, 0) at s = 0, and F is
where its conjugate point sits. Both foci map to the single chart point
(σ̄², σ̄²), so in (μ₁, μ₂) the loops meet at (σ̄², σ̄²) whichever focus
the Cartesian lift passes through.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import brentq

from config import DEFAULT_SIGMA, METRIC_DET_FLOOR
from dynamics import NaturalSystem, arclength_to_time, jacobi_metric, resample
from errors import (
    BranchAmbiguity,
    ChartBoundary,
    DegenerateDiagonal,
    DegenerateFactor,
    OutOfRange,
    OutsideChart,
    RootNotConverged,
    SingularFactor,
)
from morse import SolutionFamily
from riemann import ARCLENGTH, TIME, ChartDomain, MetricField, PathSample, conformal_transform, euclidean_metric

logger = logging.getLogger(__name__)

EDGE_Q2ZERO = "edge_q2zero"
EDGE_ELLIPSE = "edge_ellipse"
BRANCHES = (EDGE_Q2ZERO, EDGE_ELLIPSE)

CHART_FLOOR = 1e-12
# Jacobi factor below which the Cartesian Jacobi metric is treated as degenerate
JACOBI_MARGIN = 1e-6


@dataclass(frozen=True)
class GarnierModel:
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self):
        if not 0.0 < self.sigma < 1.0:
            raise OutOfRange(self.sigma, 0.0, 1.0)

    @property
    def sigma_bar2(self) -> float:
        return 1.0 - self.sigma ** 2

    @property
    def sigma_bar(self) -> float:
        return float(np.sqrt(self.sigma_bar2))

    def potential(self, q: np.ndarray) -> float:
        """U = −[½(q·q − 1)² + ½σ²q₂²], so that i₁ = 0 is the separatrix level."""
        x, y = q[0], q[1]
        r2 = x * x + y * y
        return -(0.5 * (r2 - 1.0) ** 2 + 0.5 * self.sigma ** 2 * y * y)

    def grad_potential(self, q: np.ndarray) -> np.ndarray:
        x, y = q[0], q[1]
        r2 = x * x + y * y
        return -np.array([2.0 * x * (r2 - 1.0), 2.0 * y * (r2 - 1.0) + self.sigma ** 2 * y])

    def jacobi_factor(self, q: np.ndarray) -> float:
        """2(0 − U) = (q·q − 1)² + σ²q₂²."""
        return -2.0 * self.potential(q)


@dataclass(frozen=True)
class BranchSigns:
    """α₁, α₂ ∈ {0, 1}; αᵢ = 0 exactly when μᵢ increases along the geodesic."""
    alpha1: int = 0
    alpha2: int = 0

    @property
    def eps1(self) -> int:
        return -1 if self.alpha1 else 1

    @property
    def eps2(self) -> int:
        return -1 if self.alpha2 else 1


def base_point(model: GarnierModel) -> np.ndarray:
    """D = (1, 0) ↔ (μ₁, μ₂) = (0, σ̄²)."""
    return np.array([1.0, 0.0])


def focus_point(model: GarnierModel) -> np.ndarray:
    """The focus crossed by every separatrix loop based at D."""
    return np.array([-model.sigma, 0.0])


def half_loop_length(model: GarnierModel) -> float:
    return 2.0 / 3.0 + model.sigma * (1.0 - model.sigma ** 2 / 3.0)


def loop_length(model: GarnierModel) -> float:
    """Jacobi length of one separatrix loop D → F → D: 4/3 + 2σ(1 − σ²/3)."""
    return 2.0 * half_loop_length(model)


def natural_system(model: GarnierModel) -> NaturalSystem:
    """Garnier as a natural system on the Euclidean plane, energy i₁ = 0."""
    domain = ChartDomain(
        membership=lambda q: model.jacobi_factor(q) > JACOBI_MARGIN,
        margin=JACOBI_MARGIN,
        distance=model.jacobi_factor,
    )
    return NaturalSystem(
        metric=euclidean_metric(2),
        potential=model.potential,
        grad_potential=model.grad_potential,
        energy_constant=0.0,
        name=f"garnier(sigma={model.sigma!r})",
        jacobi_domain=domain,
    )


def garnier_jacobi_metric(model: GarnierModel) -> MetricField:
    return jacobi_metric(natural_system(model))


def garnier_action_lagrangian(model: GarnierModel, q: np.ndarray, qdot: np.ndarray) -> float:
    """½|q̇|² + ½(q·q − 1)² + (σ²/2)q₂², the Lagrangian as written for the action."""
    qdot = np.asarray(qdot, dtype=float)
    return 0.5 * float(qdot @ qdot) - model.potential(np.asarray(q, dtype=float))


# ========================
# ELLIPTIC CHART
# ========================

def cartesian_to_elliptic(model: GarnierModel, q: np.ndarray) -> Tuple[float, float]:
    """
    (μ₁, μ₂) of a point inside or on the ellipse x² + y²/σ̄² = 1.

    ξ², η² are the roots of λ² − (x² + y² + σ²)λ + σ²x² = 0.
    """
    x, y = float(q[0]), float(q[1])
    sigma2 = model.sigma ** 2
    total = x * x + y * y + sigma2
    root = np.sqrt(max(total * total - 4.0 * sigma2 * x * x, 0.0))
    xi2 = 0.5 * (total + root)
    eta2 = sigma2 * x * x / xi2
    if xi2 > 1.0 + 1e-12:
        raise OutsideChart(f"point {[x, y]} lies outside the ellipse", point=[x, y])
    return max(1.0 - xi2, 0.0), min(1.0 - eta2, 1.0)


def elliptic_to_cartesian(model: GarnierModel, mu: Tuple[float, float], quadrant: Tuple[int, int] = (1, 1)) -> np.ndarray:
    mu1, mu2 = float(mu[0]), float(mu[1])
    sb2 = model.sigma_bar2
    tol = 1e-12
    if not (-tol <= mu1 <= sb2 + tol and sb2 - tol <= mu2 <= 1.0 + tol):
        raise OutsideChart(f"({mu1!r}, {mu2!r}) is outside the parallelogram", mu=[mu1, mu2])
    x = np.sqrt(max((1.0 - mu1) * (1.0 - mu2), 0.0)) / model.sigma
    y = np.sqrt(max((sb2 - mu1) * (mu2 - sb2), 0.0)) / model.sigma
    return np.array([quadrant[0] * x, quadrant[1] * y])


def _chart_factors(model: GarnierModel, mu) -> Tuple[float, float, float, float]:
    mu1, mu2 = float(mu[0]), float(mu[1])
    sb2 = model.sigma_bar2
    factors = (1.0 - mu1, sb2 - mu1, mu2 - sb2, 1.0 - mu2)
    if min(abs(v) for v in factors) < CHART_FLOOR or abs(mu2 - mu1) < CHART_FLOOR:
        raise ChartBoundary(f"({mu1!r}, {mu2!r}) is on the chart boundary", mu=[mu1, mu2])
    return factors


def elliptic_jacobian(model: GarnierModel, mu, quadrant: Tuple[int, int] = (1, 1)) -> np.ndarray:
    """∂(x, y)/∂(μ₁, μ₂) in the given quadrant."""
    one1, gap1, gap2, one2 = _chart_factors(model, mu)
    x, y = elliptic_to_cartesian(model, mu, quadrant)
    return np.array([
        [-x / (2.0 * one1), -x / (2.0 * one2)],
        [-y / (2.0 * gap1), y / (2.0 * gap2)],
    ])


def elliptic_metric(model: GarnierModel, mu) -> np.ndarray:
    _chart_factors(model, mu)
    mu1, mu2 = float(mu[0]), float(mu[1])
    sb2 = model.sigma_bar2
    g11 = -(mu1 - mu2) / (4.0 * (mu1 - 1.0) * (mu1 - sb2))
    g22 = -(mu2 - mu1) / (4.0 * (mu2 - 1.0) * (mu2 - sb2))
    return np.diag([g11, g22])


def elliptic_christoffels(model: GarnierModel, mu) -> np.ndarray:
    """Closed-form Γᵏ_ij of the elliptic metric; the second family by the swap 1 ↔ 2."""
    _chart_factors(model, mu)
    sb2 = model.sigma_bar2

    def family(a: float, b: float) -> Tuple[float, float, float]:
        g_aaa = 1.0 / (2.0 * (a - b)) - (2.0 * a - (1.0 + sb2)) / (2.0 * (a - 1.0) * (a - sb2))
        g_aab = -1.0 / (2.0 * (a - b))
        g_abb = (a - 1.0) * (a - sb2) / (2.0 * (b - 1.0) * (b - sb2) * (a - b))
        return g_aaa, g_aab, g_abb

    mu1, mu2 = float(mu[0]), float(mu[1])
    gamma = np.zeros((2, 2, 2))
    gamma[0, 0, 0], gamma[0, 0, 1], gamma[0, 1, 1] = family(mu1, mu2)
    gamma[0, 1, 0] = gamma[0, 0, 1]
    gamma[1, 1, 1], gamma[1, 1, 0], gamma[1, 0, 0] = family(mu2, mu1)
    gamma[1, 0, 1] = gamma[1, 1, 0]
    return gamma


def _parallelogram_clearance(model: GarnierModel, mu) -> float:
    sb2 = model.sigma_bar2
    return float(min(mu[0], sb2 - mu[0], mu[1] - sb2, 1.0 - mu[1]))


def elliptic_metric_field(model: GarnierModel, analytic: bool = True) -> MetricField:
    """The Euclidean metric in the elliptic chart, on the open parallelogram."""
    domain = ChartDomain(
        membership=lambda mu: _parallelogram_clearance(model, mu) > 0.0,
        margin=1e-9,
        distance=lambda mu: _parallelogram_clearance(model, mu),
    )
    return MetricField(
        dim=2,
        components=lambda mu: elliptic_metric(model, mu),
        christoffel_fn=(lambda mu: elliptic_christoffels(model, mu)) if analytic else None,
        domain=domain,
        name="garnier-elliptic",
    )


def jacobi_factor_elliptic(model: GarnierModel, mu) -> float:
    """(−(μ₁³ − σ̄²μ₁²) + (μ₂³ − σ̄²μ₂²))/(μ₂ − μ₁), equal to 2(0 − U)."""
    mu1, mu2 = float(mu[0]), float(mu[1])
    if abs(mu2 - mu1) < CHART_FLOOR:
        raise DegenerateDiagonal("the factor is undefined on μ₁ = μ₂", mu=[mu1, mu2])
    sb2 = model.sigma_bar2
    return (-(mu1 ** 3 - sb2 * mu1 ** 2) + (mu2 ** 3 - sb2 * mu2 ** 2)) / (mu2 - mu1)


def jacobi_metric_elliptic(model: GarnierModel, mu, floor: float = 1e-12) -> np.ndarray:
    factor = jacobi_factor_elliptic(model, mu)
    if factor < floor:
        raise DegenerateFactor(f"Jacobi factor {factor!r} at a vacuum image", mu=[float(mu[0]), float(mu[1])])
    return factor * elliptic_metric(model, mu)


def jacobi_metric_elliptic_field(model: GarnierModel) -> MetricField:
    return conformal_transform(
        elliptic_metric_field(model), lambda mu: jacobi_factor_elliptic(model, mu), name="garnier-jacobi-elliptic"
    )


def stackel_hamiltonian(model: GarnierModel, mu, pi) -> float:
    one1, gap1, gap2, one2 = _chart_factors(model, mu)
    mu1, mu2 = float(mu[0]), float(mu[1])
    sb2 = model.sigma_bar2
    numerator = (
        -4.0 * (mu1 - 1.0) * (mu1 - sb2) * pi[0] ** 2
        - 4.0 * (1.0 - mu2) * (mu2 - sb2) * pi[1] ** 2
        - (mu1 ** 3 - sb2 * mu1 ** 2)
        + (mu2 ** 3 - sb2 * mu2 ** 2)
    )
    return numerator / (2.0 * (mu1 - mu2))


def elliptic_momenta(model: GarnierModel, q: np.ndarray, qdot: np.ndarray) -> np.ndarray:
    """π = (∂q/∂μ)ᵀ q̇ for a Cartesian state off the axes."""
    mu = cartesian_to_elliptic(model, q)
    quadrant = (1 if q[0] >= 0 else -1, 1 if q[1] >= 0 else -1)
    return elliptic_jacobian(model, mu, quadrant).T @ np.asarray(qdot, dtype=float)


# ========================
# SEPARATRIX RELATIONS
# ========================

def _phi(model: GarnierModel, u: float) -> float:
    """ln|(u − σ)/(u + σ)| + σ ln|(1 + u)/(1 − u)|."""
    s = model.sigma
    return np.log(abs((u - s) / (u + s))) + s * np.log(abs((1.0 + u) / (1.0 - u)))


def _roots(model: GarnierModel, mu) -> Tuple[float, float]:
    u1 = np.sqrt(max(1.0 - float(mu[0]), 0.0))
    u2 = np.sqrt(max(1.0 - float(mu[1]), 0.0))
    for u in (u1, u2):
        if abs(u - model.sigma) < CHART_FLOOR or abs(u - 1.0) < CHART_FLOOR:
            raise SingularFactor(f"√(1 − μ) = {u!r} hits σ or 1", u=float(u))
    return u1, u2


def orbit_residual(model: GarnierModel, mu, a: float, signs: BranchSigns) -> float:
    """Logarithm of the orbit product minus 2σσ̄²a; zero on the orbit labelled a."""
    u1, u2 = _roots(model, mu)
    lhs = signs.eps1 * _phi(model, u1) + signs.eps2 * _phi(model, u2)
    return float(lhs - 2.0 * model.sigma * model.sigma_bar2 * a)


def orbit_parameter(model: GarnierModel, mu, signs: BranchSigns) -> float:
    """The orbit label a through a chart point."""
    return orbit_residual(model, mu, 0.0, signs) / (2.0 * model.sigma * model.sigma_bar2)


def time_residual(model: GarnierModel, mu, t: float, t0: float, signs: BranchSigns) -> float:
    """Σ εᵢ ln|(uᵢ − σ)/(uᵢ + σ)| − 2σ(t + t₀); conserved along separatrix motion."""
    u1, u2 = _roots(model, mu)
    s = model.sigma
    lhs = signs.eps1 * np.log(abs((u1 - s) / (u1 + s))) + signs.eps2 * np.log(abs((u2 - s) / (u2 + s)))
    return float(lhs - 2.0 * s * (t + t0))


def fit_time_offset(model: GarnierModel, mus, times, signs) -> float:
    """Least-squares t₀ for the time law along sampled motion."""
    offsets = [time_residual(model, mu, t, 0.0, sg) / (2.0 * model.sigma) for mu, t, sg in zip(mus, times, signs)]
    return float(np.mean(offsets))


def arclength_relation(model: GarnierModel, mu, signs: BranchSigns) -> float:
    """s + s₀ = −ε₁((μ₁ + 2)/3)√(1 − μ₁) − ε₂((μ₂ + 2)/3)√(1 − μ₂)."""
    mu1, mu2 = float(mu[0]), float(mu[1])
    u1 = np.sqrt(max(1.0 - mu1, 0.0))
    u2 = np.sqrt(max(1.0 - mu2, 0.0))
    return float(-signs.eps1 * (mu1 + 2.0) / 3.0 * u1 - signs.eps2 * (mu2 + 2.0) / 3.0 * u2)


# ========================
# SINGULAR SOLUTIONS
# ========================

def singular_solution_time(model: GarnierModel, branch: str, t, t0: float = 0.0) -> np.ndarray:
    """(tanh(t − t₀), 0) or (tanh σ(t − t₀), σ̄ sech σ(t − t₀)); rows follow t."""
    tau = np.asarray(t, dtype=float) - t0
    if branch == EDGE_Q2ZERO:
        out = np.stack([np.tanh(tau), np.zeros_like(tau)], axis=-1)
    elif branch == EDGE_ELLIPSE:
        out = np.stack([np.tanh(model.sigma * tau), model.sigma_bar / np.cosh(model.sigma * tau)], axis=-1)
    else:
        raise ValueError(f"unknown branch '{branch}'")
    return out


def singular_velocity_time(model: GarnierModel, branch: str, t, t0: float = 0.0) -> np.ndarray:
    tau = np.asarray(t, dtype=float) - t0
    if branch == EDGE_Q2ZERO:
        return np.stack([1.0 / np.cosh(tau) ** 2, np.zeros_like(tau)], axis=-1)
    if branch == EDGE_ELLIPSE:
        st = model.sigma * tau
        return np.stack(
            [model.sigma / np.cosh(st) ** 2, -model.sigma * model.sigma_bar * np.tanh(st) / np.cosh(st)], axis=-1
        )
    raise ValueError(f"unknown branch '{branch}'")


def _cubic_root(s: float) -> Tuple[float, float]:
    """Root p ∈ [−1, 1] of p − p³/3 = s and its angle θ ∈ [0, π]."""
    theta = np.arctan2(np.sqrt(max(4.0 - 9.0 * s * s, 0.0)), -3.0 * s)
    return -np.cos(theta / 3.0) + np.sqrt(3.0) * np.sin(theta / 3.0), theta


def singular_range(model: GarnierModel, branch: str) -> float:
    """Half-width of the s-range of a closed-form singular geodesic."""
    if branch == EDGE_Q2ZERO:
        return 2.0 / 3.0
    if branch == EDGE_ELLIPSE:
        return model.sigma * (1.0 - model.sigma ** 2 / 3.0)
    raise ValueError(f"unknown branch '{branch}'")


def singular_geodesic_arclength(model: GarnierModel, branch: str, s: float) -> np.ndarray:
    """Closed-form unit-speed Jacobi geodesic on the q₂ = 0 edge or on the ellipse."""
    limit = singular_range(model, branch)
    if abs(s) > limit * (1.0 + 1e-14):
        raise OutOfRange(s, -limit, limit)
    p, theta = _cubic_root(float(s))
    if branch == EDGE_Q2ZERO:
        return np.array([p, 0.0])
    sigma = model.sigma
    inside = -2.0 + sigma ** 2 + np.cos(2.0 * theta / 3.0) + np.sqrt(3.0) * np.sin(2.0 * theta / 3.0)
    return np.array([p / sigma, model.sigma_bar / sigma * np.sqrt(max(inside, 0.0))])


def singular_geodesic_tangent(model: GarnierModel, branch: str, s: float) -> np.ndarray:
    q = singular_geodesic_arclength(model, branch, s)
    if branch == EDGE_Q2ZERO:
        return np.array([1.0 / (1.0 - q[0] ** 2), 0.0])
    sigma = model.sigma
    dq1 = 1.0 / (sigma * (1.0 - sigma ** 2 * q[0] ** 2))
    return np.array([dq1, -model.sigma_bar * q[0] * dq1 / np.sqrt(1.0 - q[0] ** 2)])


def singular_geodesic_path(model: GarnierModel, branch: str, s_grid) -> PathSample:
    s_grid = np.asarray(s_grid, dtype=float)
    points = np.array([singular_geodesic_arclength(model, branch, s) for s in s_grid])
    tangents = np.array([singular_geodesic_tangent(model, branch, s) for s in s_grid])
    return PathSample(ARCLENGTH, s_grid, points, tangents, metadata={"branch": branch})


def reduced_geodesic_residual(model: GarnierModel, branch: str, q1, dq1, ddq1) -> np.ndarray:
    """
    Residual of the one-dimensional geodesic equation on a singular edge:
    q₁″ + (2q₁/(q₁² − 1))q₁′² on q₂ = 0, q₁″ − (2σ²q₁/(1 − σ²q₁²))q₁′² on the ellipse.
    """
    q1, dq1, ddq1 = (np.asarray(v, dtype=float) for v in (q1, dq1, ddq1))
    if branch == EDGE_Q2ZERO:
        return ddq1 + 2.0 * q1 / (q1 ** 2 - 1.0) * dq1 ** 2
    if branch == EDGE_ELLIPSE:
        sigma2 = model.sigma ** 2
        return ddq1 - 2.0 * sigma2 * q1 / (1.0 - sigma2 * q1 ** 2) * dq1 ** 2
    raise ValueError(f"unknown branch '{branch}'")


# ========================
# SEPARATRIX LOOPS
# ========================

@dataclass(frozen=True)
class LoopPoint:
    q: np.ndarray
    xi: float
    eta: float
    first_half: bool

    @property
    def mu(self) -> Tuple[float, float]:
        return 1.0 - self.xi ** 2, 1.0 - self.eta ** 2

    @property
    def on_fold(self) -> bool:
        """η = 0, where π₂ vanishes and the μ₂ branch sign is not determined by the point."""
        return self.eta == 0.0

    @property
    def signs(self) -> BranchSigns:
        if self.first_half:
            return BranchSigns(0, 0 if self.eta > 0 else 1)
        return BranchSigns(1, 0 if self.eta < 0 else 1)


def _solve_eta(model: GarnierModel, target: float) -> float:
    """η ∈ [−σ, σ] with φ(η) = target; φ decreases from +∞ to −∞ there."""
    edge = model.sigma * (1.0 - 1e-15)
    lo, hi = -edge, edge
    if _phi(model, lo) <= target:
        return -model.sigma
    if _phi(model, hi) >= target:
        return model.sigma
    return brentq(lambda e: _phi(model, e) - target, lo, hi, xtol=1e-16, rtol=4.0 * np.finfo(float).eps)


def _half_arclength(u: float) -> float:
    return u - u ** 3 / 3.0


def separatrix_point(model: GarnierModel, a: float, s: float) -> LoopPoint:
    """
    Point at Jacobi arc-length s on the loop labelled a, with s = 0 at the
    focus and s = ∓L/2 at D.

    The first half (y > 0) satisfies φ(ξ) + φ(η) = 2σσ̄²a and the second
    (y < 0) φ(ξ) + φ(η) = −2σσ̄²a; for fixed ξ the orbit fixes η, and ξ is
    then found from the monotone arc-length relation.
    """
    sigma = model.sigma
    half = half_loop_length(model)
    if abs(s) > half * (1.0 + 1e-14):
        raise OutOfRange(s, -half, half)
    first = s <= 0.0
    c = 2.0 * sigma * model.sigma_bar2 * a * (1.0 if first else -1.0)
    direction = -1.0 if first else 1.0

    def eta_of(xi: float) -> float:
        return _solve_eta(model, c - _phi(model, xi))

    def arclength(xi: float) -> float:
        if xi <= sigma:
            return 0.0
        if xi >= 1.0:
            return direction * half
        return direction * (_half_arclength(xi) + _half_arclength(eta_of(xi)))

    if s == 0.0:
        xi, eta = sigma, -sigma
    elif abs(s) >= half:
        xi, eta = 1.0, sigma
    else:
        try:
            xi, info = brentq(
                lambda v: arclength(v) - s, sigma, 1.0, xtol=1e-16, rtol=4.0 * np.finfo(float).eps, full_output=True
            )
        except (ValueError, RuntimeError) as e:
            raise RootNotConverged(f"loop a={a!r} at s={s!r}: {e}", a=a, s=s)
        if not info.converged:
            raise RootNotConverged(f"loop a={a!r} at s={s!r} did not converge", a=a, s=s)
        eta = eta_of(xi)

    x = xi * eta / sigma
    y = np.sqrt(max((xi * xi - sigma * sigma) * (sigma * sigma - eta * eta), 0.0)) / sigma
    return LoopPoint(np.array([x, y if first else -y]), float(xi), float(eta), first)


def _loop_tangent(model: GarnierModel, point: LoopPoint) -> Optional[np.ndarray]:
    """dq/ds from the separatrix flow α' = P/Φ, β' = Q/Φ; None where Φ vanishes."""
    sigma = model.sigma
    xi, eta = point.xi, point.eta
    sinh_a = np.sqrt(max(xi * xi - sigma * sigma, 0.0)) / sigma
    if not point.first_half:
        sinh_a = -sinh_a
    cosh_a = xi / sigma
    cos_b = eta / sigma
    sin_b = np.sqrt(max(sigma * sigma - eta * eta, 0.0)) / sigma
    eps_a, eps_b = (-1.0, 1.0) if point.first_half else (1.0, -1.0)
    P = eps_a * sigma * sinh_a * (1.0 - xi * xi)
    Q = eps_b * sigma * sin_b * (1.0 - eta * eta)
    Phi = P * P + Q * Q
    if Phi < 1e-24:
        return None
    da, db = P / Phi, Q / Phi
    return sigma * np.array([
        sinh_a * cos_b * da - cosh_a * sin_b * db,
        cosh_a * sin_b * da + sinh_a * cos_b * db,
    ])


def solve_separatrix_geodesic(model: GarnierModel, a: float, s_grid) -> PathSample:
    """
    The Jacobi geodesic of the loop labelled a, sampled on s_grid inside
    (−L/2, L/2), in Cartesian coordinates.

    Metadata carries the elliptic images (`mu`), branch signs (`alpha`)
    and the orbit label.
    """
    s_grid = np.asarray(s_grid, dtype=float)
    half = half_loop_length(model)
    for s in (s_grid[0], s_grid[-1]):
        if not -half < s < half:
            raise OutOfRange(float(s), -half, half)
    points, tangents, mus, alphas = [], [], [], []
    for s in s_grid:
        point = separatrix_point(model, a, s)
        tangent = _loop_tangent(model, point)
        if tangent is None:
            step = 1e-5 * half
            tangent = (separatrix_point(model, a, s + step).q - separatrix_point(model, a, s - step).q) / (2.0 * step)
        signs = point.signs
        if point.on_fold:
            if not alphas:
                raise BranchAmbiguity(f"loop a={a!r} starts on a fold at s={s!r}", a=a, s=float(s))
            signs = BranchSigns(signs.alpha1, alphas[-1][1])
        points.append(point.q)
        tangents.append(tangent)
        mus.append(point.mu)
        alphas.append((signs.alpha1, signs.alpha2))
    metadata = {"a": float(a), "mu": np.array(mus), "alpha": np.array(alphas, dtype=int), "t_origin": 0.0}
    logger.debug("solved loop a=%r on %d samples", a, len(s_grid))
    return PathSample(ARCLENGTH, s_grid, np.array(points), np.array(tangents), metadata=metadata)


def loop_grid(model: GarnierModel, samples: int, margin_ratio: float = 1e-3) -> np.ndarray:
    """Uniform s-grid over one loop, kept a margin away from the vacuum D at both ends."""
    half = half_loop_length(model)
    margin = margin_ratio * 2.0 * half
    return np.linspace(-half + margin, half - margin, samples)


def separatrix_family(model: GarnierModel):
    """The S¹ family of loops based at D as a (a, s) → point generator."""
    def generator(a: float, grid: np.ndarray) -> PathSample:
        return solve_separatrix_geodesic(model, a, grid)

    return SolutionFamily(generator=generator, parameter_kind=ARCLENGTH, a_domain=(-np.inf, np.inf), periodic=True)


def newton_family_path(model: GarnierModel, a: float, s_grid, t_grid=None) -> PathSample:
    """
    The Newton trajectory of loop a: the s-member mapped to time with t = 0
    at the focus, optionally resampled onto t_grid.
    """
    system = natural_system(model)
    path = arclength_to_time(system, solve_separatrix_geodesic(model, a, s_grid), t_origin=0.0)
    if t_grid is None:
        return path
    return resample(path, t_grid)


def newton_family(model: GarnierModel, s_grid, t_grid):
    """The loop family in the Newton picture, members sampled on a common t-grid."""
    def generator(a: float, grid: np.ndarray) -> PathSample:
        return newton_family_path(model, a, s_grid, grid)

    return SolutionFamily(generator=generator, parameter_kind=TIME, a_domain=(-np.inf, np.inf), periodic=True)


# ========================
# JACOBI FIELD
# ========================

def explicit_jacobi_field(model: GarnierModel, mu, signs: BranchSigns) -> np.ndarray:
    """
    ∂μ/∂a along the loop family, in the elliptic chart:
    J = j·(−ε₁μ₂√(1 − μ₁), ε₂μ₁√(1 − μ₂)).
    """
    mu1, mu2 = float(mu[0]), float(mu[1])
    sb2 = model.sigma_bar2
    if abs(mu1 - mu2) < CHART_FLOOR:
        raise DegenerateDiagonal("the Jacobi field is singular on μ₁ = μ₂", mu=[mu1, mu2])
    denominator = (mu1 - mu2) * (mu1 ** 2 + mu2 ** 2 + mu1 * mu2 - (mu1 + mu2) * sb2)
    if abs(denominator) < METRIC_DET_FLOOR:
        raise DegenerateDiagonal("vanishing denominator in j", mu=[mu1, mu2])
    j = 2.0 * mu1 * mu2 * (mu1 - sb2) * (mu2 - sb2) / denominator
    u1 = np.sqrt(max(1.0 - mu1, 0.0))
    u2 = np.sqrt(max(1.0 - mu2, 0.0))
    return j * np.array([-signs.eps1 * mu2 * u1, signs.eps2 * mu1 * u2])


def jacobi_linear_system_residual(model: GarnierModel, mu, signs: BranchSigns, J) -> np.ndarray:
    """Residuals of the two linear conditions obtained by differentiating the orbit and arc-length relations in a."""
    mu1, mu2 = float(mu[0]), float(mu[1])
    u1, u2 = np.sqrt(1.0 - mu1), np.sqrt(1.0 - mu2)
    sb2 = model.sigma_bar2
    first = (
        -signs.eps1 / (mu1 * u1 * (sb2 - mu1)) * J[0]
        - signs.eps2 / (mu2 * u2 * (sb2 - mu2)) * J[1]
        - 2.0
    )
    second = signs.eps1 * mu1 / u1 * J[0] + signs.eps2 * mu2 / u2 * J[1]
    return np.array([first, second])


def explicit_jacobi_field_cartesian(model: GarnierModel, q: np.ndarray, signs: BranchSigns) -> np.ndarray:
    """The closed-form Jacobi field pushed to Cartesian coordinates (off the axes)."""
    mu = cartesian_to_elliptic(model, q)
    quadrant = (1 if q[0] >= 0 else -1, 1 if q[1] >= 0 else -1)
    return elliptic_jacobian(model, mu, quadrant) @ explicit_jacobi_field(model, mu, signs)
