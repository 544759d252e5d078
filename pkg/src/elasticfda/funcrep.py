"""Uniform-grid functions and the numerical kernels shared by every module."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class Grid:
    """Uniform sampling ``t_k = t0 + k (t1 - t0) / (n - 1)``."""

    t0: float = 0.0
    t1: float = 1.0
    n: int = 101

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"grid needs n >= 3 samples, got {self.n}")
        if not self.t1 > self.t0:
            raise ValueError(f"grid needs t1 > t0, got [{self.t0}, {self.t1}]")
        object.__setattr__(self, "n", int(self.n))

    @property
    def step(self) -> float:
        return (self.t1 - self.t0) / (self.n - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.t0, self.t1, self.n)

    def weights(self) -> np.ndarray:
        """Composite trapezoid weights, so ``weights() @ v == trapz(v)``."""
        w = np.full(self.n, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w


UNIT = Grid(0.0, 1.0, 101)


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SampledFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("function samples must be finite")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_callable(cls, fn, grid: Grid = UNIT) -> "SampledFunction":
        return cls(grid, fn(grid.points))

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    def __len__(self):
        return self.grid.n


def gradient(f: SampledFunction) -> SampledFunction:
    # second-order central differences inside, one-sided second order at the ends
    return SampledFunction(f.grid, np.gradient(f.values, f.grid.step, edge_order=2))


def trapz(f: SampledFunction) -> float:
    v = f.values
    return float(f.grid.step * (v.sum() - 0.5 * (v[0] + v[-1])))


def cumtrapz(values: np.ndarray, step: float) -> np.ndarray:
    """Running trapezoid integral starting at zero."""
    out = np.zeros_like(values, dtype=float)
    out[1:] = np.cumsum(0.5 * step * (values[1:] + values[:-1]))
    return out


def smooth_box(f: SampledFunction, iterations: int) -> SampledFunction:
    """Apply the ``[1/4, 1/2, 1/4]`` filter ``iterations`` times, endpoints held fixed."""
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    v = np.array(f.values)
    for _ in range(int(iterations)):
        v[1:-1] = 0.25 * v[:-2] + 0.5 * v[1:-1] + 0.25 * v[2:]
    return SampledFunction(f.grid, v)


def resample(f: SampledFunction, grid: Grid) -> SampledFunction:
    """Piecewise-linear interpolation of ``f`` onto ``grid``."""
    slack = 1e-12 * (f.grid.t1 - f.grid.t0)
    if grid.t0 < f.grid.t0 - slack or grid.t1 > f.grid.t1 + slack:
        raise DomainError(
            f"target [{grid.t0}, {grid.t1}] leaves source domain [{f.grid.t0}, {f.grid.t1}]"
        )
    if grid == f.grid:
        return f
    return SampledFunction(grid, np.interp(grid.points, f.grid.points, f.values))


def evaluate(f: SampledFunction, x: np.ndarray) -> np.ndarray:
    """Linear interpolation of ``f`` at arbitrary abscissae inside its domain."""
    x = np.asarray(x, dtype=float)
    slack = 1e-9 * (f.grid.t1 - f.grid.t0)
    if x.size and (x.min() < f.grid.t0 - slack or x.max() > f.grid.t1 + slack):
        raise DomainError("evaluation point outside the function's domain")
    return np.interp(x, f.grid.points, f.values)


def check_common_grid(fs: Sequence) -> Grid:
    if not fs:
        raise ValueError("need at least one function")
    grid = fs[0].grid
    for i, g in enumerate(fs):
        if g.grid != grid:
            raise ValueError(f"function {i} is on {g.grid}, expected {grid}")
    return grid


def stack(fs: Sequence) -> np.ndarray:
    """Values of functions sharing a grid as an ``(n_functions, n_samples)`` array."""
    check_common_grid(fs)
    return np.vstack([f.values for f in fs])


def cross_sectional_variance(fs: Sequence[SampledFunction]) -> float:
    """Integrated pointwise sample variance ``1/(n-1) * int sum_i (g_i - mean)^2``."""
    if len(fs) < 2:
        raise ValueError("cross-sectional variance needs at least two functions")
    grid = check_common_grid(fs)
    vals = stack(fs)
    # centre on the first member so identical inputs give exactly zero
    rel = vals - vals[0]
    dev = rel - rel.mean(axis=0)
    pointwise = (dev ** 2).sum(axis=0) / (len(fs) - 1)
    return float(grid.weights() @ pointwise)
