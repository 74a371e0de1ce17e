"""
Jacobi fields from parametric families, conjugate points along 2-dimensional
extremals, Morse indices and Morse/Poincaré series bookkeeping.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from config import BASE_EXCLUSION_FRACTION, FAMILY_STEP_RATIO, NOISE_FLOOR_RATIO, ZERO_XTOL
from errors import (
    FamilyResidual,
    GridMismatch,
    NoisyAmplitude,
    OutOfRange,
    TruncationMismatch,
    TruncationOverflow,
    Unsupported,
)
from riemann import (
    ARCLENGTH,
    MetricField,
    PathSample,
    covariant_derivative_along,
    curvature_operator,
    integrate_geodesic,
    metric_tensor,
    norm,
)

logger = logging.getLogger(__name__)

# share of the checked samples allowed under the noise floor
NOISY_FRACTION = 0.1


# ========================
# FAMILIES AND JACOBI FIELDS
# ========================

@dataclass(frozen=True)
class SolutionFamily:
    """
    A one-parameter family of extremals: generator(a, grid) samples the
    member labelled a on the given parameter grid.
    """
    generator: Callable[[float, np.ndarray], PathSample]
    parameter_kind: str
    a_domain: Tuple[float, float] = (-np.inf, np.inf)
    periodic: bool = False
    residual: Optional[Callable[[PathSample], float]] = None
    residual_tol: float = 1e-5

    def member(self, a: float, grid: np.ndarray) -> PathSample:
        return self.generator(a, np.asarray(grid, dtype=float))


@dataclass(frozen=True)
class ConjugatePointRecord:
    parameter_value: float
    multiplicity: int = 1
    detection_margin: float = 0.0
    point: Optional[np.ndarray] = None


def geodesic_fan(metric: MetricField, p0: np.ndarray, v0: np.ndarray, tol: float) -> SolutionFamily:
    """
    Geodesics leaving p0, labelled by the angle a of their initial velocity
    from v0 (rotated towards the metric normal of v0, speed kept).
    """
    p0 = np.asarray(p0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    g = metric_tensor(metric, p0)
    speed = float(np.sqrt(v0 @ g @ v0))
    normal = np.array([-v0[1], v0[0]])
    normal = normal - (normal @ g @ v0) / speed ** 2 * v0
    normal = normal * speed / np.sqrt(normal @ g @ normal)

    def generator(a: float, grid: np.ndarray) -> PathSample:
        v = np.cos(a) * v0 + np.sin(a) * normal
        return integrate_geodesic(metric, p0, v, (float(grid[0]), float(grid[-1])), tol, samples=len(grid))

    return SolutionFamily(generator=generator, parameter_kind=ARCLENGTH, a_domain=(-np.pi, np.pi), periodic=True)


def _family_step(family: SolutionFamily, a0: float, step: Optional[float]) -> float:
    if step is not None:
        return step
    low, high = family.a_domain
    scale = (high - low) if np.isfinite(high - low) else max(1.0, abs(a0))
    return FAMILY_STEP_RATIO * scale


def jacobi_field_from_family(
    family: SolutionFamily, a0: float, grid: np.ndarray, step: Optional[float] = None
) -> np.ndarray:
    """
    ∂γ/∂a at a0 on `grid`: central differences in a with one Richardson pass.

    Raises:
        FamilyResidual: The member at a0 fails the family's extremal test.
        OutOfRange: a0 ± step leaves a non-periodic parameter domain.
    """
    h = _family_step(family, a0, step)
    low, high = family.a_domain
    if not family.periodic and not (low <= a0 - h and a0 + h <= high):
        raise OutOfRange(a0, low, high)
    if family.residual is not None:
        residual = family.residual(family.member(a0, grid))
        if residual > family.residual_tol:
            raise FamilyResidual(
                f"member a={a0!r} has extremal residual {residual:.3e}", a=a0, residual=residual
            )

    def central(width: float) -> np.ndarray:
        return (family.member(a0 + width, grid).points - family.member(a0 - width, grid).points) / (2.0 * width)

    coarse = central(h)
    fine = central(0.5 * h)
    return (4.0 * fine - coarse) / 3.0


def jacobi_equation_residual(metric: MetricField, geodesic: PathSample, J: np.ndarray) -> float:
    """max over interior samples of ‖D²J/ds² + R(γ', J)γ'‖."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if J.shape != geodesic.points.shape:
        raise GridMismatch("field is not sampled on the geodesic grid", field=list(J.shape))
    second = covariant_derivative_along(metric, geodesic, covariant_derivative_along(metric, geodesic, J))
    worst = 0.0
    for n in range(2, len(geodesic) - 2):
        p = geodesic.points[n]
        value = second[n] + curvature_operator(metric, p, geodesic.tangents[n], J[n])
        worst = max(worst, norm(metric, p, value))
    return worst


# ========================
# CONJUGATE POINTS
# ========================

def orthogonal_amplitude(metric: MetricField, path: PathSample, J: np.ndarray) -> np.ndarray:
    """
    j(s) = ⟨J, n⟩ with n the unit normal: the coordinate rotation of the
    tangent, made orthogonal to it in `metric`.
    """
    if path.dim != 2:
        raise Unsupported("orthogonal amplitude needs a 2-dimensional configuration space", dim=path.dim)
    J = np.atleast_2d(np.asarray(J, dtype=float))
    out = np.empty(len(path))
    for k, (p, T) in enumerate(zip(path.points, path.tangents)):
        g = metric_tensor(metric, p)
        n = np.array([-T[1], T[0]])
        n = n - (n @ g @ T) / (T @ g @ T) * T
        n = n / np.sqrt(n @ g @ n)
        out[k] = J[k] @ g @ n
    return out


def conjugate_points(
    metric: MetricField,
    geodesic: PathSample,
    J_orth: np.ndarray,
    base_exclusion: float = BASE_EXCLUSION_FRACTION,
) -> List[ConjugatePointRecord]:
    """
    Sign changes of the orthogonal amplitude of a Jacobi field vanishing at
    the base point, refined to ZERO_XTOL on a cubic spline of the amplitude.

    Samples within `base_exclusion` of the span from the base point (the
    start of the grid) are ignored; the far end is checked.
    Touching zeros without a sign change are reported as warnings only.

    Raises:
        NoisyAmplitude: The amplitude sits below the noise floor on more
            than a tenth of the checked samples.
    """
    grid = geodesic.grid
    amplitude = orthogonal_amplitude(metric, geodesic, J_orth)
    span = grid[-1] - grid[0]
    window = grid >= grid[0] + base_exclusion * span
    idx = np.flatnonzero(window)
    peak = float(np.max(np.abs(amplitude[idx]))) if len(idx) else 0.0
    floor = NOISE_FLOOR_RATIO * peak
    quiet = np.abs(amplitude[idx]) <= floor
    if peak == 0.0 or np.mean(quiet) > NOISY_FRACTION:
        raise NoisyAmplitude(
            "orthogonal amplitude is below the noise floor over an extended span",
            peak=peak, quiet_fraction=float(np.mean(quiet)) if len(idx) else 1.0,
        )

    spline = CubicSpline(grid, amplitude)
    location = CubicSpline(grid, geodesic.points, axis=0)
    records = []
    for i, k in zip(idx[:-1], idx[1:]):
        left, right = amplitude[i], amplitude[k]
        if left == 0.0:
            continue
        if right == 0.0 and k + 1 < len(grid) and window[k + 1] and np.sign(amplitude[k + 1]) == -np.sign(left):
            value = float(grid[k])
        elif left * right < 0.0:
            value = float(brentq(spline, grid[i], grid[k], xtol=ZERO_XTOL))
        else:
            continue
        margin = float(min(abs(left), abs(amplitude[k + 1] if right == 0.0 else right)) / peak)
        records.append(ConjugatePointRecord(value, 1, margin, np.asarray(location(value))))

    magnitude = np.abs(amplitude)
    for k in idx[1:-1]:
        if (
            magnitude[k] < 1e-6 * peak
            and magnitude[k] <= magnitude[k - 1]
            and magnitude[k] <= magnitude[k + 1]
            and np.sign(amplitude[k - 1]) == np.sign(amplitude[k + 1])
        ):
            logger.warning("touching zero without sign change at %r rejected", float(grid[k]))

    logger.info("found %d conjugate point(s)", len(records))
    return records


def morse_index(records: Sequence[ConjugatePointRecord]) -> int:
    return int(sum(r.multiplicity for r in records))


def iterate_path(path: PathSample, passes: int, period: Optional[float] = None) -> PathSample:
    """
    γ♯γ♯…: `passes` copies of a closed path, each shifted by `period` in
    the parameter (default: the grid span plus one step).
    """
    if passes < 1:
        raise ValueError("passes must be at least 1")
    if period is None:
        period = (path.grid[-1] - path.grid[0]) + (path.grid[1] - path.grid[0])
    if period <= path.grid[-1] - path.grid[0]:
        raise GridMismatch("period must exceed the grid span", period=period)
    grid = np.concatenate([path.grid + p * period for p in range(passes)])
    energies = np.tile(path.energies, passes) if path.energies is not None else None
    metadata = dict(path.metadata, passes=passes, period=float(period))
    for key in ("mu", "alpha"):
        if key in path.metadata:
            metadata[key] = np.concatenate([path.metadata[key]] * passes)
    return PathSample(
        path.parameter_kind,
        grid,
        np.tile(path.points, (passes, 1)),
        np.tile(path.tangents, (passes, 1)),
        energies,
        metadata,
    )


def iterate_field(values: np.ndarray, passes: int) -> np.ndarray:
    return np.tile(np.atleast_2d(values), (passes, 1))


# ========================
# FORMAL SERIES
# ========================

@dataclass(frozen=True)
class FormalSeries:
    """Integer power series in t truncated after t**truncation."""
    coefficients: Tuple[int, ...]
    truncation: int

    def __post_init__(self):
        coefficients = tuple(int(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coefficients)
        if self.truncation < 0:
            raise ValueError("truncation must be non-negative")
        if len(coefficients) != self.truncation + 1:
            raise TruncationMismatch(
                f"{len(coefficients)} coefficients for truncation {self.truncation}",
                length=len(coefficients), truncation=self.truncation,
            )

    @classmethod
    def polynomial(cls, coefficients: Sequence[int], truncation: int) -> "FormalSeries":
        """A polynomial cut after t**truncation."""
        padded = list(coefficients[: truncation + 1]) + [0] * max(0, truncation + 1 - len(coefficients))
        return cls(tuple(padded), truncation)

    @classmethod
    def one(cls, truncation: int) -> "FormalSeries":
        return cls.polynomial([1], truncation)

    @classmethod
    def geometric(cls, step: int, truncation: int) -> "FormalSeries":
        """1/(1 − t**step)."""
        if step < 1:
            raise ValueError("step must be positive")
        return cls(tuple(1 if k % step == 0 else 0 for k in range(truncation + 1)), truncation)

    def _check(self, other: "FormalSeries") -> None:
        if other.truncation != self.truncation:
            raise TruncationMismatch(
                f"truncations {self.truncation} and {other.truncation} differ",
                left=self.truncation, right=other.truncation,
            )

    def __add__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        return FormalSeries(tuple(a + b for a, b in zip(self.coefficients, other.coefficients)), self.truncation)

    def __sub__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        return FormalSeries(tuple(a - b for a, b in zip(self.coefficients, other.coefficients)), self.truncation)

    def __mul__(self, other: "FormalSeries") -> "FormalSeries":
        self._check(other)
        out = [0] * (self.truncation + 1)
        for i, a in enumerate(self.coefficients):
            if a:
                for j in range(self.truncation + 1 - i):
                    out[i + j] += a * other.coefficients[j]
        return FormalSeries(tuple(out), self.truncation)

    def shift(self, power: int) -> "FormalSeries":
        """Multiply by t**power."""
        if power < 0:
            raise ValueError("power must be non-negative")
        out = [0] * power + list(self.coefficients)
        return FormalSeries(tuple(out[: self.truncation + 1]), self.truncation)

    def __str__(self) -> str:
        terms = [f"{c}t^{k}" if k else f"{c}" for k, c in enumerate(self.coefficients) if c]
        return " + ".join(terms) if terms else "0"


Contribution = Tuple[Union[FormalSeries, Sequence[int]], int]


def morse_series(contributions: Sequence[Contribution], truncation: int) -> FormalSeries:
    """
    Σ P_t(N_c)·t^μ(N_c) cut after t**truncation.

    Each P is either an exact polynomial (integer sequence) or a
    FormalSeries, whose own truncation must reach `truncation`.
    """
    total = FormalSeries.polynomial([], truncation)
    for series, index in contributions:
        if index < 0:
            raise ValueError(f"negative Morse index {index}")
        if isinstance(series, FormalSeries):
            if series.truncation < truncation:
                raise TruncationOverflow(
                    f"contribution known only to t^{series.truncation}, requested t^{truncation}",
                    available=series.truncation, requested=truncation,
                )
            series = FormalSeries(series.coefficients[: truncation + 1], truncation)
        else:
            series = FormalSeries.polynomial(list(series), truncation)
        total = total + series.shift(index)
    return total


def poincare_series_loop_sphere(n: int, truncation: int) -> FormalSeries:
    """Stored Poincaré series: n = 2 gives 1/(1 − t), n = 3 gives 1/(1 − t²)."""
    if n == 2:
        return FormalSeries.geometric(1, truncation)
    if n == 3:
        return FormalSeries.geometric(2, truncation)
    raise Unsupported(f"no stored Poincaré series for n={n}", n=n)


def morse_inequality_check(morse: FormalSeries, poincare: FormalSeries) -> bool:
    """True iff every Morse coefficient dominates the Poincaré one."""
    if morse.truncation != poincare.truncation:
        raise TruncationMismatch(
            f"truncations {morse.truncation} and {poincare.truncation} differ",
            left=morse.truncation, right=poincare.truncation,
        )
    return all(m >= p for m, p in zip(morse.coefficients, poincare.coefficients))
