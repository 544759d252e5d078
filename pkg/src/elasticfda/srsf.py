"""Square-root slope functions: transform, inverse, warp action and L2 metric."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .funcrep import Grid, SampledFunction, _frozen, cumtrapz, gradient
from .warpspace import Warp, resample_warp


@dataclass(frozen=True, eq=False)
class Srsf:
    """SRSF samples ``q`` together with the initial value ``f(0)`` they drop."""

    grid: Grid
    values: np.ndarray
    f0: float = 0.0

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("SRSF samples must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "f0", float(self.f0))


def to_srsf(f: SampledFunction) -> Srsf:
    df = gradient(f).values
    return Srsf(f.grid, np.sign(df) * np.sqrt(np.abs(df)), f.values[0])


def from_srsf(q: Srsf) -> SampledFunction:
    """``f(t) = f(0) + int_0^t q|q| ds`` by cumulative trapezoid."""
    return SampledFunction(q.grid, q.f0 + cumtrapz(q.values * np.abs(q.values), q.grid.step))


def _warp_values(q_values: np.ndarray, t: np.ndarray, gam: np.ndarray, step: float) -> np.ndarray:
    slope = np.gradient(gam, step, edge_order=2)
    return np.interp(gam, t, q_values) * np.sqrt(np.maximum(slope, 0.0))


def warp_action(q: Srsf, g: Warp) -> Srsf:
    """SRSF of ``f o gamma``: ``q(gamma(t)) sqrt(gamma'(t))``."""
    if not isinstance(g, Warp):
        raise TypeError("warp_action expects a Warp")
    if q.grid.t0 != 0.0 or q.grid.t1 != 1.0:
        raise ValueError("warp action is defined on the canonical [0, 1] grid")
    g = resample_warp(g, q.grid)
    return Srsf(q.grid, _warp_values(q.values, q.grid.points, g.values, q.grid.step), q.f0)


def l2_distance(q1: Srsf, q2: Srsf) -> float:
    if q1.grid != q2.grid:
        raise ValueError("SRSFs must share a grid")
    d = q1.values - q2.values
    return float(np.sqrt(q1.grid.weights() @ (d * d)))


def l2_norm(q: Srsf) -> float:
    return float(np.sqrt(q.grid.weights() @ (q.values * q.values)))
