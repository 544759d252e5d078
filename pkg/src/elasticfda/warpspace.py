"""Warping functions, their square-root (Hilbert sphere) representation, and
Karcher means of warps computed by gradient descent on the sphere."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, GeometryError
from .funcrep import Grid, UNIT, _frozen, cumtrapz

log = logging.getLogger(__name__)

BOUNDARY_TOL = 1e-10
UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class Warp:
    """Boundary-preserving, strictly increasing map of [0, 1] onto itself."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        if abs(self.grid.t0) > 0 or abs(self.grid.t1 - 1.0) > 0:
            raise ValueError("warps live on the canonical [0, 1] grid")
        if abs(vals[0]) > BOUNDARY_TOL or abs(vals[-1] - 1.0) > BOUNDARY_TOL:
            raise ValueError(f"warp must fix the endpoints, got {vals[0]!r}, {vals[-1]!r}")
        if not np.all(np.diff(vals) > 0):
            raise ValueError("warp must be strictly increasing")
        object.__setattr__(self, "values", vals)

    @classmethod
    def identity(cls, grid: Grid = UNIT) -> "Warp":
        return cls(grid, grid.points)


@dataclass(frozen=True, eq=False)
class Psi:
    """Point on the unit Hilbert sphere, ``psi = sqrt(gamma')``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {vals.shape}")
        norm2 = float(self.grid.weights() @ (vals * vals))
        if abs(norm2 - 1.0) > UNIT_NORM_TOL:
            raise ValueError(f"psi must have unit L2 norm, got {np.sqrt(norm2)}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class ShootingVector:
    """Tangent vector at a sphere point (the Karcher mean, in practice)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


def inner(grid: Grid, a: np.ndarray, b: np.ndarray) -> float:
    return float(grid.weights() @ (np.asarray(a) * np.asarray(b)))


def norm(grid: Grid, a: np.ndarray) -> float:
    return float(np.sqrt(max(inner(grid, a, a), 0.0)))


def _unit(grid: Grid, values: np.ndarray) -> np.ndarray:
    return values / norm(grid, values)


def is_tangent(mu: Psi, v: ShootingVector, tol: float = UNIT_NORM_TOL) -> bool:
    return abs(inner(mu.grid, mu.values, v.values)) <= tol


def to_psi(g: Warp) -> Psi:
    # one-sided endpoint differences can dip below zero on steep warps
    slope = np.gradient(g.values, g.grid.step, edge_order=2)
    psi = np.sqrt(np.maximum(slope, 0.0))
    return Psi(g.grid, _unit(g.grid, psi))


def _pinned(grid: Grid, gam: np.ndarray) -> np.ndarray:
    gam = gam - gam[0]
    gam = gam / gam[-1]
    if not np.all(np.diff(gam) > 0):
        # psi touching zero on two neighbouring nodes yields a flat step
        gam = (1.0 - 1e-9) * gam + 1e-9 * grid.points
    gam[0], gam[-1] = 0.0, 1.0
    return gam


def from_psi(p: Psi) -> Warp:
    gam = cumtrapz(p.values ** 2, p.grid.step)
    return Warp(p.grid, _pinned(p.grid, gam))


def phase_distance(g1: Warp, g2: Warp) -> float:
    """Arc length between the sphere representatives of two warps."""
    if g1.grid != g2.grid:
        raise ValueError("warps must share a grid")
    return sphere_distance(to_psi(g1), to_psi(g2))


def sphere_distance(p1: Psi, p2: Psi) -> float:
    ip = inner(p1.grid, p1.values, p2.values)
    return float(np.arccos(np.clip(ip, -1.0, 1.0)))


def sphere_log(mu: Psi, p: Psi) -> ShootingVector:
    if mu.grid != p.grid:
        raise ValueError("sphere points must share a grid")
    theta = sphere_distance(mu, p)
    if theta < 1e-10:
        return ShootingVector(mu.grid, np.zeros(mu.grid.n))
    if np.pi - theta < 1e-8:
        raise GeometryError("log map undefined for antipodal points")
    v = theta / np.sin(theta) * (p.values - np.cos(theta) * mu.values)
    return ShootingVector(mu.grid, v)


def sphere_exp(mu: Psi, v: ShootingVector) -> Psi:
    length = norm(mu.grid, v.values)
    if length < 1e-10:
        return mu
    out = np.cos(length) * mu.values + np.sin(length) * v.values / length
    return Psi(mu.grid, _unit(mu.grid, out))


@dataclass(frozen=True, eq=False)
class WarpMean:
    """Karcher mean of warps with the shooting vectors of every input at the mean."""

    mean: Warp
    mu_psi: Psi
    vs: list
    cost_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0

    def __iter__(self):
        # unpacks as (mean, mu_psi, vs)
        return iter((self.mean, self.mu_psi, self.vs))


def karcher_mean_warps(
    gs: Sequence[Warp],
    step: float = 0.3,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> WarpMean:
    """Karcher mean on the sphere of ``sqrt(gamma')``.

    Starts at the normalized extrinsic average of the psi's and takes geodesic
    steps of length ``step * |v_bar|`` along the mean shooting vector until
    ``|v_bar| <= tol``. Raises :class:`ConvergenceError` (with the last iterate on
    ``.result``) after ``max_iter`` steps.
    """
    if len(gs) < 1:
        raise ValueError("need at least one warp")
    grid = gs[0].grid
    if any(g.grid != grid for g in gs):
        raise ValueError("warps must share a grid")
    if not 0 < step <= 1:
        raise ValueError("step must lie in (0, 1]")

    psis = [to_psi(g) for g in gs]
    w = np.mean([p.values for p in psis], axis=0)
    mu = Psi(grid, _unit(grid, w))

    costs = []
    for it in range(max_iter + 1):
        vs = [sphere_log(mu, p) for p in psis]
        costs.append(sum(norm(grid, v.values) ** 2 for v in vs))
        vbar = np.mean([v.values for v in vs], axis=0)
        if norm(grid, vbar) <= tol:
            break
        if it == max_iter:
            result = WarpMean(from_psi(mu), mu, vs, np.array(costs), it)
            raise ConvergenceError(
                f"warp Karcher mean not converged after {max_iter} iterations "
                f"(|v_bar| = {norm(grid, vbar):.3g})",
                result,
            )
        mu = sphere_exp(mu, ShootingVector(grid, step * vbar))
    return WarpMean(from_psi(mu), mu, vs, np.array(costs), it)


def invert_warp(g: Warp) -> Warp:
    t = g.grid.points
    inv = np.interp(t, g.values, t)
    inv[0], inv[-1] = 0.0, 1.0
    return Warp(g.grid, inv)


def compose_warps(g1: Warp, g2: Warp) -> Warp:
    """``(g1 o g2)(t) = g1(g2(t))``."""
    if g1.grid != g2.grid:
        raise ValueError("warps must share a grid")
    out = np.interp(g2.values, g1.grid.points, g1.values)
    out[0], out[-1] = 0.0, 1.0
    return Warp(g1.grid, out)


def resample_warp(g: Warp, grid: Grid) -> Warp:
    if grid == g.grid:
        return g
    out = np.interp(grid.points, g.grid.points, g.values)
    out[0], out[-1] = 0.0, 1.0
    return Warp(grid, out)
