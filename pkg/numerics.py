"""
Grid calculus shared by the geometry modules: derivatives, quadrature and
resampling of sampled curves and fields.
"""

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline


def is_uniform(grid: np.ndarray, rtol: float = 1e-9) -> bool:
    """True when the grid spacing is constant to `rtol`."""
    if len(grid) < 3:
        return True
    steps = np.diff(grid)
    return bool(np.all(np.abs(steps - steps[0]) <= rtol * abs(steps[0])))


def grid_derivative(grid: np.ndarray, values: np.ndarray) -> np.ndarray:
    """
    Derivative of sampled values along axis 0.

    Uniform grids use 4th-order central differences in the interior and
    2nd-order one-sided stencils at the two end samples; non-uniform grids
    differentiate a not-a-knot cubic spline.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(grid)
    if n < 2:
        return np.zeros_like(values)
    if n < 5:
        return np.gradient(values, grid, axis=0, edge_order=2 if n >= 3 else 1)
    if not is_uniform(grid):
        return CubicSpline(grid, values, axis=0).derivative()(grid)

    h = grid[1] - grid[0]
    out = np.empty_like(values)
    out[2:-2] = (-values[4:] + 8.0 * values[3:-1] - 8.0 * values[1:-3] + values[:-4]) / (12.0 * h)
    out[1] = (-3.0 * values[0] - 10.0 * values[1] + 18.0 * values[2] - 6.0 * values[3] + values[4]) / (12.0 * h)
    out[-2] = (3.0 * values[-1] + 10.0 * values[-2] - 18.0 * values[-3] + 6.0 * values[-4] - values[-5]) / (12.0 * h)
    out[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * h)
    return out


def integrate(grid: np.ndarray, values: np.ndarray) -> float:
    """Integral over the whole grid: Simpson on uniform grids, spline otherwise."""
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    n = len(grid)
    if n < 2:
        return 0.0
    if n == 2:
        return float(0.5 * (grid[1] - grid[0]) * (values[0] + values[1]))
    if is_uniform(grid) or n < 4:
        return float(simpson(values, x=grid))
    return float(CubicSpline(grid, values).integrate(grid[0], grid[-1]))


def cumulative_hermite(grid: np.ndarray, values: np.ndarray, slopes: np.ndarray) -> np.ndarray:
    """
    Cumulative integral from grid[0] using the end-corrected trapezoid rule.

    With exact slopes this is the integral of the piecewise cubic Hermite
    interpolant, 4th-order accurate on any grid.
    """
    grid = np.asarray(grid, dtype=float)
    steps = np.diff(grid)
    pieces = 0.5 * steps * (values[:-1] + values[1:]) + steps ** 2 / 12.0 * (slopes[:-1] - slopes[1:])
    return np.concatenate([[0.0], np.cumsum(pieces)])
