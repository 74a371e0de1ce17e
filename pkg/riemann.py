"""
Charts, metrics and the geometry built on them: Christoffel symbols,
curvature, covariant derivatives along sampled curves, conformal
rescaling and geodesic integration.

Index convention: Christoffel arrays are indexed gamma[k, i, j] = Γᵏ_ij and
derivative arrays carry the differentiation index first.
"""

import logging
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Callable, Mapping, Optional

import numpy as np
from scipy.integrate import solve_ivp

from config import CURVATURE_STEP_ANALYTIC, FD_STEP, METRIC_DET_FLOOR
from errors import DegenerateMetric, GridMismatch, LeftDomain, NonPositiveFactor, OutOfDomain, StepUnderflow
from numerics import grid_derivative

logger = logging.getLogger(__name__)

TIME = "time_t"
ARCLENGTH = "jacobi_arclength_s"


# ========================
# TYPES
# ========================

@dataclass(frozen=True)
class ChartDomain:
    """
    Open chart domain.

    `distance` (optional) is a continuous signed distance to the boundary,
    positive inside; the integrators use it to locate exits precisely.
    """
    membership: Callable[[np.ndarray], bool]
    margin: float = 1e-9
    distance: Optional[Callable[[np.ndarray], float]] = None

    def contains(self, p: np.ndarray) -> bool:
        if self.distance is not None:
            return bool(self.distance(p) > self.margin)
        return bool(self.membership(p))

    def clearance(self, p: np.ndarray) -> float:
        if self.distance is not None:
            return float(self.distance(p) - self.margin)
        return 1.0 if self.membership(p) else -1.0


@dataclass(frozen=True)
class MetricField:
    dim: int
    components: Callable[[np.ndarray], np.ndarray]
    christoffel_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    fd_step: float = FD_STEP
    domain: Optional[ChartDomain] = None
    name: str = "metric"

    @property
    def christoffel_mode(self) -> str:
        return "analytic" if self.christoffel_fn is not None else "finite_difference"


@dataclass(frozen=True)
class PathSample:
    """A sampled curve: grid, points, tangents w.r.t. the grid parameter, energies. Metadata is read-only."""
    parameter_kind: str
    grid: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    energies: Optional[np.ndarray] = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        tangents = np.atleast_2d(np.asarray(self.tangents, dtype=float))
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "tangents", tangents)
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))
        if self.energies is not None:
            object.__setattr__(self, "energies", np.asarray(self.energies, dtype=float))
        if self.parameter_kind not in (TIME, ARCLENGTH):
            raise ValueError(f"unknown parameter kind '{self.parameter_kind}'")
        n = len(grid)
        if points.shape[0] != n or tangents.shape[0] != n:
            raise GridMismatch("points/tangents do not match the grid", grid=n, points=points.shape[0])
        if self.energies is not None and len(self.energies) != n:
            raise GridMismatch("energies do not match the grid", grid=n, energies=len(self.energies))
        if n > 1 and np.any(np.diff(grid) <= 0.0):
            raise GridMismatch("grid must be strictly increasing")

    def __len__(self) -> int:
        return len(self.grid)

    @property
    def dim(self) -> int:
        return self.points.shape[1]


# ========================
# METRIC ACCESS
# ========================

def _check_point(metric: MetricField, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if metric.domain is not None and not metric.domain.contains(p):
        raise OutOfDomain(f"point {p.tolist()} is outside the domain of {metric.name}", point=p.tolist())
    return p


def metric_tensor(metric: MetricField, p: np.ndarray) -> np.ndarray:
    """g_ij(p), checked symmetric positive definite."""
    p = _check_point(metric, p)
    g = np.asarray(metric.components(p), dtype=float)
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise DegenerateMetric(f"{metric.name} is not positive definite at {p.tolist()}", point=p.tolist())
    if np.linalg.det(g) < METRIC_DET_FLOOR:
        raise DegenerateMetric(f"det g below floor at {p.tolist()}", point=p.tolist(), det=float(np.linalg.det(g)))
    return g


def metric_inverse(metric: MetricField, p: np.ndarray) -> np.ndarray:
    return np.linalg.inv(metric_tensor(metric, p))


def inner(metric: MetricField, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    return float(np.asarray(u) @ metric_tensor(metric, p) @ np.asarray(v))


def norm(metric: MetricField, p: np.ndarray, u: np.ndarray) -> float:
    return float(np.sqrt(max(inner(metric, p, u, u), 0.0)))


def _steps(p: np.ndarray, base: float) -> np.ndarray:
    return base * np.maximum(1.0, np.abs(p))


def metric_derivatives(metric: MetricField, p: np.ndarray) -> np.ndarray:
    """dg[l, i, j] = ∂_l g_ij by central differences."""
    p = np.asarray(p, dtype=float)
    steps = _steps(p, metric.fd_step)
    dg = np.empty((metric.dim, metric.dim, metric.dim))
    for l in range(metric.dim):
        e = np.zeros(metric.dim)
        e[l] = steps[l]
        dg[l] = (np.asarray(metric.components(p + e)) - np.asarray(metric.components(p - e))) / (2.0 * steps[l])
    return dg


def christoffel(metric: MetricField, p: np.ndarray, check: bool = True) -> np.ndarray:
    """
    Christoffel symbols Γᵏ_ij at p.

    Analytic mode returns the supplied closed form; finite-difference mode
    evaluates ½ g^{kl}(∂_i g_lj + ∂_j g_li − ∂_l g_ij) from central differences.
    With check=False the domain and definiteness checks are skipped; the
    integrators use this for trial stages past the boundary event.
    """
    if check:
        g = metric_tensor(metric, p)
    else:
        g = np.asarray(metric.components(np.asarray(p, dtype=float)), dtype=float)
    if metric.christoffel_fn is not None:
        return np.asarray(metric.christoffel_fn(np.asarray(p, dtype=float)), dtype=float)
    dg = metric_derivatives(metric, p)
    lowered = dg.transpose(1, 0, 2) + dg.transpose(1, 2, 0) - dg
    gamma = 0.5 * np.einsum("kl,lij->kij", np.linalg.inv(g), lowered)
    return 0.5 * (gamma + gamma.transpose(0, 2, 1))


def christoffel_derivatives(metric: MetricField, p: np.ndarray) -> np.ndarray:
    """dgamma[l, k, i, j] = ∂_l Γᵏ_ij; nested differences in finite-difference mode."""
    p = np.asarray(p, dtype=float)
    if metric.christoffel_mode == "analytic":
        base = CURVATURE_STEP_ANALYTIC
    else:
        base = np.sqrt(metric.fd_step)
    steps = _steps(p, base)
    out = np.empty((metric.dim,) * 4)
    for l in range(metric.dim):
        e = np.zeros(metric.dim)
        e[l] = steps[l]
        out[l] = (christoffel(metric, p + e) - christoffel(metric, p - e)) / (2.0 * steps[l])
    return out


def conformal_transform(
    metric: MetricField,
    factor: Callable[[np.ndarray], float],
    christoffel_override: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    name: Optional[str] = None,
) -> MetricField:
    """
    The metric h = factor·g.

    Christoffels of the result are finite-difference unless an analytic
    override is given.
    """
    def components(p: np.ndarray) -> np.ndarray:
        value = float(factor(p))
        if not value > 0.0:
            raise NonPositiveFactor(f"conformal factor {value!r} at {np.asarray(p).tolist()}", point=np.asarray(p).tolist(), value=value)
        return value * np.asarray(metric.components(p), dtype=float)

    return MetricField(
        dim=metric.dim,
        components=components,
        christoffel_fn=christoffel_override,
        fd_step=metric.fd_step,
        domain=metric.domain,
        name=name or f"conformal({metric.name})",
    )


def curvature_operator(metric: MetricField, p: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """
    R(u, v)u, the geodesic-deviation term.

    Sign convention: for orthonormal u, v on the unit sphere this is v, so
    Jacobi fields solve J'' + R(γ', J)γ' = 0.
    """
    p = _check_point(metric, p)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    gamma = christoffel(metric, p)
    dgamma = christoffel_derivatives(metric, p)
    # A[a, c, d] = (∂_c Γᵃ_db + Γᵃ_ce Γᵉ_db) u^b
    a = np.einsum("cadb,b->acd", dgamma, u) + np.einsum("ace,edb,b->acd", gamma, gamma, u)
    return -np.einsum("acd,c,d->a", a - a.transpose(0, 2, 1), u, v)


# ========================
# CURVES
# ========================

def covariant_derivative_along(metric: MetricField, path: PathSample, field_values: np.ndarray) -> np.ndarray:
    """DV/dt along path: grid derivative of the components plus Γ(γ̇, V)."""
    field_values = np.atleast_2d(np.asarray(field_values, dtype=float))
    if field_values.shape != path.points.shape:
        raise GridMismatch(
            "field is not sampled on the path grid",
            field=list(field_values.shape), path=list(path.points.shape),
        )
    out = grid_derivative(path.grid, field_values)
    for n, p in enumerate(path.points):
        out[n] += np.einsum("kij,i,j->k", christoffel(metric, p), path.tangents[n], field_values[n])
    return out


def geodesic_residual(metric: MetricField, path: PathSample) -> np.ndarray:
    """Per-sample metric norm of ∇_γ' γ'."""
    acceleration = covariant_derivative_along(metric, path, path.tangents)
    return np.array([norm(metric, p, a) for p, a in zip(path.points, acceleration)])


def path_from_solution(sol, dim: int, parameter_kind: str, energy: Callable, upto: Optional[int] = None) -> PathSample:
    grid = sol.t[:upto]
    states = sol.y[:, :upto].T
    points, tangents = states[:, :dim], states[:, dim:]
    energies = np.array([energy(p, v) for p, v in zip(points, tangents)])
    return PathSample(parameter_kind, grid, points, tangents, energies)


def run_ivp(
    rhs: Callable,
    domain: Optional[ChartDomain],
    dim: int,
    p0: np.ndarray,
    v0: np.ndarray,
    span: tuple,
    tol: float,
    samples: Optional[int],
    parameter_kind: str,
    energy: Callable,
) -> PathSample:
    """
    Adaptive RK4(5) integration of a second-order system with a domain
    event; shared by geodesic and Newton integration.
    """
    events = None
    if domain is not None:
        def leave(_s, y):
            return domain.clearance(y[:dim])
        leave.terminal = True
        leave.direction = -1
        events = [leave]

    t_eval = np.linspace(span[0], span[1], samples) if samples else None
    y0 = np.concatenate([np.asarray(p0, dtype=float), np.asarray(v0, dtype=float)])
    sol = solve_ivp(rhs, span, y0, method="RK45", rtol=tol, atol=tol, t_eval=t_eval, events=events)
    logger.debug("solve_ivp: status=%s nfev=%s steps=%s", sol.status, sol.nfev, len(sol.t))

    if sol.status == -1:
        raise StepUnderflow(sol.message, s=float(sol.t[-1]) if len(sol.t) else float(span[0]))
    if sol.status == 1:
        s_exit = float(sol.t_events[0][0])
        inside = [domain.contains(y[:dim]) for y in sol.y.T]
        upto = inside.index(False) if False in inside else len(inside)
        partial = path_from_solution(sol, dim, parameter_kind, energy, upto) if upto else None
        logger.info("integration left the domain at %r", s_exit)
        raise LeftDomain(s_exit, partial)

    path = path_from_solution(sol, dim, parameter_kind, energy)
    return path


def integrate_geodesic(
    metric: MetricField,
    p0: np.ndarray,
    v0: np.ndarray,
    span: tuple,
    tol: float,
    samples: Optional[int] = None,
) -> PathSample:
    """
    Integrate ẍᵏ + Γᵏ_ij ẋⁱẋʲ = 0 from (p0, v0) over span.

    Args:
        samples: If given, the output is sampled on a uniform grid of that
            many points; otherwise on the accepted solver steps.

    Raises:
        LeftDomain: The geodesic exits the chart; `partial` holds the path so far.
        StepUnderflow: The adaptive step collapsed.
    """
    p0 = _check_point(metric, p0)
    dim = metric.dim

    def rhs(_s, y):
        x, v = y[:dim], y[dim:]
        return np.concatenate([v, -np.einsum("kij,i,j->k", christoffel(metric, x, check=False), v, v)])

    def kinetic(p, v):
        return 0.5 * inner(metric, p, v, v)

    path = run_ivp(rhs, metric.domain, dim, p0, v0, span, tol, samples, ARCLENGTH, kinetic)
    speeds = np.sqrt(2.0 * path.energies)
    drift = float(np.std(speeds) / np.mean(speeds)) if np.mean(speeds) > 0 else 0.0
    return replace(path, metadata=dict(path.metadata, speed_drift=drift))


# ========================
# MODEL METRICS
# ========================

def euclidean_metric(dim: int = 2) -> MetricField:
    return MetricField(
        dim=dim,
        components=lambda p: np.eye(dim),
        christoffel_fn=lambda p: np.zeros((dim, dim, dim)),
        name="euclidean",
    )


def _sphere_christoffel(p: np.ndarray) -> np.ndarray:
    theta = p[0]
    gamma = np.zeros((2, 2, 2))
    gamma[0, 1, 1] = -np.sin(theta) * np.cos(theta)
    gamma[1, 0, 1] = gamma[1, 1, 0] = np.cos(theta) / np.sin(theta)
    return gamma


def sphere_metric(analytic: bool = True) -> MetricField:
    """Unit 2-sphere in (colatitude θ, longitude φ)."""
    domain = ChartDomain(
        membership=lambda p: 0.0 < p[0] < np.pi,
        margin=1e-6,
        distance=lambda p: min(p[0], np.pi - p[0]),
    )
    return MetricField(
        dim=2,
        components=lambda p: np.diag([1.0, np.sin(p[0]) ** 2]),
        christoffel_fn=_sphere_christoffel if analytic else None,
        domain=domain,
        name="sphere",
    )
