"""Seeded simulated functional datasets and CSV/JSON ingestion.

Random draws come from ``numpy.random.default_rng(seed)`` (PCG64 bit generator,
``Generator.normal`` for Gaussian variates), so a given seed yields the same data
across numpy releases that keep that stream stable.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ParseError
from .funcrep import Grid, SampledFunction
from .warpspace import Warp

SIM_GRID_N = 101

RECIPES = ("unimodal-fig1", "bimodal-fig2", "unimodal-fig3", "two-class")


@dataclass(frozen=True, eq=False)
class SimulatedSet:
    observed: list
    truth_amplitude: list
    truth_warps: list
    seed: int
    recipe: str
    domain: tuple = (0.0, 1.0)
    labels: list = field(default_factory=list)


def _unit_grid(n_points: int = SIM_GRID_N) -> Grid:
    return Grid(0.0, 1.0, n_points)


def gen_unimodal_fig1(n: int = 21, seed: int = 0, n_points: int = SIM_GRID_N) -> SimulatedSet:
    """``y_i(t) = z_i exp(-(t - a_i)^2 / 2)`` on [-6, 6], z ~ N(1, 0.05^2), a ~ N(0, 1.25^2)."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    grid = _unit_grid(n_points)
    t = -6.0 + 12.0 * grid.points
    z = rng.normal(1.0, 0.05, size=n)
    a = rng.normal(0.0, 1.25, size=n)
    ys = [SampledFunction(grid, z[i] * np.exp(-((t - a[i]) ** 2) / 2)) for i in range(n)]
    ident = [Warp.identity(grid) for _ in range(n)]
    return SimulatedSet(ys, ys, ident, seed, "unimodal-fig1", (-6.0, 6.0))


def fig2_warp(a: float, u: np.ndarray) -> np.ndarray:
    """Exponential warp family mapped to [0, 1]; ``a == 0`` is the identity."""
    if a == 0:
        return np.array(u, dtype=float)
    return np.expm1(a * u) / math.expm1(a)


def _bimodal(t, z1, z2):
    return z1 * np.exp(-((t - 1.5) ** 2) / 2) + z2 * np.exp(-((t + 1.5) ** 2) / 2)


def _warped_bimodal(n, rng, grid, heights, height_sd, a_values):
    u = grid.points
    z = np.column_stack(
        [rng.normal(heights[0], height_sd, size=n), rng.normal(heights[1], height_sd, size=n)]
    )
    observed, truth, warps = [], [], []
    for i in range(n):
        gam = fig2_warp(a_values[i], u)
        gam[0], gam[-1] = 0.0, 1.0
        y = _bimodal(-3.0 + 6.0 * u, z[i, 0], z[i, 1])
        # closed-form composition, exact at the nodes
        x = _bimodal(-3.0 + 6.0 * gam, z[i, 0], z[i, 1])
        truth.append(SampledFunction(grid, y))
        observed.append(SampledFunction(grid, x))
        warps.append(Warp(grid, gam))
    return observed, truth, warps


def gen_bimodal_fig2(n: int = 21, seed: int = 0, n_points: int = SIM_GRID_N) -> SimulatedSet:
    """Two-bump functions on [-3, 3] warped by an exponential family with
    equally spaced parameters in [-1, 1]."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    a = -1.0 + 2.0 * np.arange(n) / (n - 1)
    if n % 2 == 1:
        a[n // 2] = 0.0
    obs, truth, warps = _warped_bimodal(n, rng, _unit_grid(n_points), (1.0, 1.0), 0.25, a)
    return SimulatedSet(obs, truth, warps, seed, "bimodal-fig2", (-3.0, 3.0))


def gen_unimodal_fig3(n: int = 39, seed: int = 0, n_points: int = SIM_GRID_N) -> SimulatedSet:
    """Unimodal bumps of width 0.3 on [0, 1] with equally spaced centres in
    [0.15, 0.85] and N(1, 0.05^2) heights."""
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    grid = _unit_grid(n_points)
    t = grid.points
    b = np.linspace(0.15, 0.85, n)
    z = rng.normal(1.0, 0.05, size=n)
    ys = [SampledFunction(grid, z[i] * np.exp(-((t - b[i]) ** 2) / (2 * 0.09))) for i in range(n)]
    ident = [Warp.identity(grid) for _ in range(n)]
    return SimulatedSet(ys, ys, ident, seed, "unimodal-fig3", (0.0, 1.0))


def gen_two_class(seed: int = 0, n_per_class: int = 20, n_points: int = SIM_GRID_N) -> SimulatedSet:
    """Class ``A``: the bimodal recipe. Class ``B``: peak-height means (1.4, 0.7)
    and heavier warps, with parameters of magnitude in [1.5, 3] instead of
    [-1, 1]; half of them negative."""
    if n_per_class < 2:
        raise ValueError("need n_per_class >= 2")
    rng = np.random.default_rng(seed)
    grid = _unit_grid(n_points)
    a_a = rng.permutation(np.linspace(-1.0, 1.0, n_per_class))
    mags = np.linspace(1.5, 3.0, n_per_class)
    signs = np.where(np.arange(n_per_class) % 2 == 0, 1.0, -1.0)
    a_b = rng.permutation(mags * signs)
    obs_a, truth_a, warps_a = _warped_bimodal(n_per_class, rng, grid, (1.0, 1.0), 0.25, a_a)
    obs_b, truth_b, warps_b = _warped_bimodal(n_per_class, rng, grid, (1.4, 0.7), 0.25, a_b)
    labels = ["A"] * n_per_class + ["B"] * n_per_class
    return SimulatedSet(
        obs_a + obs_b, truth_a + truth_b, warps_a + warps_b, seed, "two-class", (-3.0, 3.0), labels
    )


def simulate(recipe: str, n: int | None = None, seed: int = 0) -> SimulatedSet:
    if recipe == "unimodal-fig1":
        return gen_unimodal_fig1(21 if n is None else n, seed)
    if recipe == "bimodal-fig2":
        return gen_bimodal_fig2(21 if n is None else n, seed)
    if recipe == "unimodal-fig3":
        return gen_unimodal_fig3(39 if n is None else n, seed)
    if recipe == "two-class":
        return gen_two_class(seed, 20 if n is None else n)
    raise ValueError(f"unknown recipe {recipe!r}; valid recipes: {', '.join(RECIPES)}")


# ---------------------------------------------------------------- file formats


@dataclass(frozen=True, eq=False)
class FunctionTable:
    """Functions read from disk, mapped onto [0, 1], with their column names and
    the original ``(a, b)`` domain."""

    functions: list
    names: list
    domain: tuple

    def __iter__(self):
        return iter(self.functions)

    def __len__(self):
        return len(self.functions)

    def __getitem__(self, i):
        return self.functions[i]


UNIFORM_RTOL = 1e-6


def _check_abscissae(t: np.ndarray, row_offset: int = 2) -> tuple:
    if t.size < 3:
        raise ParseError("need at least 3 sample points", row=row_offset + t.size - 1)
    dt = np.diff(t)
    bad = np.nonzero(dt <= 0)[0]
    if bad.size:
        raise ParseError("t column must be strictly increasing", row=row_offset + int(bad[0]) + 1, column=1)
    h = (t[-1] - t[0]) / (t.size - 1)
    bad = np.nonzero(np.abs(dt - h) > UNIFORM_RTOL * abs(h))[0]
    if bad.size:
        raise ParseError(
            f"t column is not uniformly spaced at index {int(bad[0]) + 1}",
            row=row_offset + int(bad[0]) + 1,
            column=1,
        )
    return float(t[0]), float(t[-1])


def load_csv(path) -> FunctionTable:
    """Read ``t,f1,f2,...`` with a header row; every function is mapped to [0, 1]."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise ParseError("need a t column and at least one function column", row=1)
    width = len(header)
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", row=r)
        vals = []
        for c, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=r, column=c) from None
            if not math.isfinite(v):
                raise ParseError(f"non-finite cell {cell!r}", row=r, column=c)
            vals.append(v)
        data.append(vals)
    arr = np.array(data, dtype=float).reshape(len(data), width)
    domain = _check_abscissae(arr[:, 0])
    grid = Grid(0.0, 1.0, arr.shape[0])
    fs = [SampledFunction(grid, arr[:, c]) for c in range(1, width)]
    return FunctionTable(fs, header[1:], domain)


def _fmt(v: float) -> str:
    return repr(float(v))


def save_csv(path, fs: Sequence[SampledFunction], names: Sequence[str] | None = None, domain=(0.0, 1.0)):
    """Inverse of :func:`load_csv`: the t column is written on ``domain``."""
    if not fs:
        raise ValueError("nothing to write")
    grid = fs[0].grid
    for f in fs:
        if f.grid != grid:
            raise ValueError("functions must share a grid")
    if names is None:
        names = [f"f{i + 1}" for i in range(len(fs))]
    a, b = domain
    t = a + (b - a) * (grid.points - grid.t0) / (grid.t1 - grid.t0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *names])
        for k in range(grid.n):
            w.writerow([_fmt(t[k]), *(_fmt(f.values[k]) for f in fs)])


def save_csv_header_only(path, names: Sequence[str]):
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerow(["t", *names])


def load_json(path) -> FunctionTable:
    """``{"domain": [a, b], "grid_n": n, "functions": [[...], ...], "labels": [...]}``"""
    doc = json.loads(Path(path).read_text())
    try:
        a, b = (float(x) for x in doc["domain"])
        n = int(doc["grid_n"])
        funcs = doc["functions"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed functional-data JSON: {exc}") from None
    if not b > a:
        raise ParseError("domain must satisfy a < b")
    grid = Grid(0.0, 1.0, n)
    fs = []
    for i, vals in enumerate(funcs):
        if len(vals) != n:
            raise ParseError(f"function {i} has {len(vals)} samples, expected {n}")
        fs.append(SampledFunction(grid, vals))
    labels = doc.get("labels") or [f"f{i + 1}" for i in range(len(fs))]
    if len(labels) != len(fs):
        raise ParseError("labels and functions differ in length")
    return FunctionTable(fs, [str(x) for x in labels], (a, b))


def save_json(path, fs: Sequence[SampledFunction], labels=None, domain=(0.0, 1.0)):
    doc = {
        "domain": list(domain),
        "grid_n": fs[0].grid.n,
        "functions": [list(map(float, f.values)) for f in fs],
    }
    if labels is not None:
        doc["labels"] = list(labels)
    Path(path).write_text(json.dumps(doc))
