"""Pairwise elastic registration by dynamic programming and multi-function
phase-amplitude separation around a Karcher mean in SRSF space."""

from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from math import gcd
from typing import Sequence

import numpy as np

from . import _dp
from .errors import ConvergenceError
from .funcrep import Grid, SampledFunction, check_common_grid, cross_sectional_variance
from .srsf import Srsf, from_srsf, l2_distance, to_srsf, warp_action
from .warpspace import (
    Warp,
    compose_warps,
    invert_warp,
    karcher_mean_warps,
    resample_warp,
)

log = logging.getLogger(__name__)

DEFAULT_SLOPE_CAP = 7
MAX_LATTICE_N = 241


@dataclass(frozen=True)
class DpLattice:
    """Square lattice of ``n`` nodes per axis with admissible segment slopes.

    Slopes are the coprime pairs ``(drow, dcol)`` with entries in
    ``1..slope_cap``, ordered by preference: closest to ``(1, 1)`` first, then
    smaller ``drow``. The DP keeps the first slope reaching the minimum cost, which
    makes ties deterministic.
    """

    n: int
    slope_cap: int = DEFAULT_SLOPE_CAP

    def __post_init__(self):
        if self.n < 3:
            raise ValueError("lattice needs at least 3 nodes")
        if self.slope_cap < 1:
            raise ValueError("slope_cap must be >= 1")

    @classmethod
    def for_grid(cls, grid: Grid, slope_cap: int = DEFAULT_SLOPE_CAP, max_n: int = MAX_LATTICE_N):
        return cls(min(grid.n, max_n), slope_cap)

    @property
    def slopes(self) -> np.ndarray:
        cap = self.slope_cap
        pairs = [
            (a, b)
            for a in range(1, cap + 1)
            for b in range(1, cap + 1)
            if gcd(a, b) == 1
        ]
        pairs.sort(key=lambda p: ((p[0] - 1) ** 2 + (p[1] - 1) ** 2, p[0]))
        return np.array(pairs, dtype=np.int64)


def _lattice_inputs(q1: Srsf, q2: Srsf, lattice: DpLattice):
    if q1.grid != q2.grid:
        raise ValueError("SRSFs must share a grid")
    grid = q1.grid
    if lattice.n > grid.n:
        raise ValueError(f"lattice has {lattice.n} nodes but the grid only {grid.n}")
    if lattice.n == grid.n:
        return grid, q1.values, q2.values
    coarse = Grid(grid.t0, grid.t1, lattice.n)
    t = grid.points
    return coarse, np.interp(coarse.points, t, q1.values), np.interp(coarse.points, t, q2.values)


def dp_solve(q1: Srsf, q2: Srsf, lattice: DpLattice):
    """Optimal lattice path and its discrete cost. Returns ``(rows, cols, cost)``."""
    coarse, a, b = _lattice_inputs(q1, q2, lattice)
    slopes = lattice.slopes
    cost, back = _dp.dp_table(
        np.ascontiguousarray(a), np.ascontiguousarray(b), coarse.step, slopes
    )
    rows, cols = _dp.backtrack(back, slopes)
    return rows, cols, float(cost[-1, -1])


def optimal_warp(q1: Srsf, q2: Srsf, lattice: DpLattice | None = None) -> Warp:
    """Warp ``gamma`` minimising ``|q1 - (q2 o gamma) sqrt(gamma')|`` over lattice paths."""
    if lattice is None:
        lattice = DpLattice.for_grid(q1.grid)
    rows, cols, _ = dp_solve(q1, q2, lattice)
    coarse = Grid(0.0, 1.0, lattice.n)
    tc = coarse.points
    gam = np.interp(tc, tc[rows], tc[cols])
    gam[0], gam[-1] = 0.0, 1.0
    return resample_warp(Warp(coarse, gam), q1.grid)


def amplitude_distance(
    f1: SampledFunction, f2: SampledFunction, lattice: DpLattice | None = None
) -> float:
    q1, q2 = to_srsf(f1), to_srsf(f2)
    return l2_distance(q1, warp_action(q2, optimal_warp(q1, q2, lattice)))


@dataclass(frozen=True, eq=False)
class SeparationResult:
    mu_q: Srsf
    aligned: list
    warps: list
    aligned_functions: list
    iterations: int
    cost_trace: np.ndarray
    converged: bool = True
    mean_f0: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def mean_function(self) -> SampledFunction:
        return from_srsf(Srsf(self.mu_q.grid, self.mu_q.values, self.mean_f0))


def _align_all(mu: Srsf, qs, lattice, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda q: optimal_warp(mu, q, lattice), qs))
    return [optimal_warp(mu, q, lattice) for q in qs]


def separate(
    fs: Sequence[SampledFunction],
    lattice: DpLattice | None = None,
    tol: float = 1e-4,
    max_iter: int = 20,
    workers: int | None = None,
    strict: bool = False,
) -> SeparationResult:
    """Align ``fs`` to their Karcher mean and split phase from amplitude.

    The mean is initialised at the SRSF closest to the extrinsic average and
    refined by alternating DP alignment and averaging until the mean moves by
    less than ``tol``. If an update would raise the summed squared distance (a
    discretisation plateau) the previous iterate is kept and iteration stops.
    Finally the mean is re-centred so the Karcher mean of the warps is the
    identity.

    Hitting ``max_iter`` emits a warning and returns the last iterate; with
    ``strict=True`` a :class:`ConvergenceError` carrying it is raised instead.
    """
    if len(fs) < 2:
        raise ValueError("separation needs at least two functions")
    grid = check_common_grid(fs)
    if grid.t0 != 0.0 or grid.t1 != 1.0:
        raise ValueError("functions must be on the canonical [0, 1] grid")
    if lattice is None:
        lattice = DpLattice.for_grid(grid)
    w = grid.weights()
    qs = [to_srsf(f) for f in fs]
    Q = np.vstack([q.values for q in qs])
    avg = Q.mean(axis=0)
    start = int(np.argmin([(q.values - avg) ** 2 @ w for q in qs]))
    mu = Srsf(grid, Q[start])

    costs = []
    best = None
    converged = False
    notes = []
    it = 0
    for it in range(1, max_iter + 1):
        gams = _align_all(mu, qs, lattice, workers)
        aligned = np.vstack([warp_action(q, g).values for q, g in zip(qs, gams)])
        cost = float(((aligned - mu.values) ** 2 @ w).sum())
        if costs and cost > costs[-1]:
            notes.append(f"objective rose at iteration {it}; kept iteration {it - 1}")
            it -= 1
            converged = True
            break
        costs.append(cost)
        best = (mu, gams)
        new_mu = aligned.mean(axis=0)
        increment = float(np.sqrt((new_mu - mu.values) ** 2 @ w))
        log.debug("iteration %d: cost %.6g, increment %.3g", it, cost, increment)
        if increment < tol:
            converged = True
            break
        mu = Srsf(grid, new_mu)

    mu, gams = best
    result = _center(fs, qs, mu, gams, it, np.array(costs), converged, notes)
    if not converged:
        msg = f"phase-amplitude separation stopped at max_iter={max_iter} before reaching tol={tol}"
        if strict:
            raise ConvergenceError(msg, result)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return result


def _center(fs, qs, mu, gams, iterations, costs, converged, notes) -> SeparationResult:
    gam_mean = karcher_mean_warps(gams).mean
    gam_inv = invert_warp(gam_mean)
    mu_q = warp_action(mu, gam_inv)
    warps = [compose_warps(g, gam_inv) for g in gams]
    aligned = [warp_action(q, g) for q, g in zip(qs, warps)]
    aligned_f = [from_srsf(q) for q in aligned]
    f0s = np.array([f.values[0] for f in fs])
    return SeparationResult(
        mu_q=mu_q,
        aligned=aligned,
        warps=warps,
        aligned_functions=aligned_f,
        iterations=iterations,
        cost_trace=costs,
        converged=converged,
        mean_f0=float(f0s.mean()),
        notes=notes,
    )


@dataclass(frozen=True)
class VarianceDecomposition:
    original: float
    amplitude: float
    phase: float

    def __iter__(self):
        return iter((self.original, self.amplitude, self.phase))

    def as_dict(self):
        return {
            "original_variance": self.original,
            "amplitude_variance": self.amplitude,
            "phase_variance": self.phase,
        }


def variance_decomposition(fs: Sequence[SampledFunction], result: SeparationResult) -> VarianceDecomposition:
    """Cross-sectional variance of the inputs, the aligned functions, and the
    mean function composed with each warp."""
    mu_f = result.mean_function
    t = mu_f.grid.points
    phase_fs = [SampledFunction(mu_f.grid, np.interp(g.values, t, mu_f.values)) for g in result.warps]
    return VarianceDecomposition(
        cross_sectional_variance(list(fs)),
        cross_sectional_variance(result.aligned_functions),
        cross_sectional_variance(phase_fs),
    )
