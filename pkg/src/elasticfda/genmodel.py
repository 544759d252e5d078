"""Generative models on fPCA coefficients and random sampling of functions.

A model describes the joint law of ``(f0, c, z)``: the initial value ``f(0)``,
``k1`` vertical coefficients and ``k2`` horizontal coefficients. Two families
are provided: a multivariate Gaussian (block-diagonal or full covariance) and a
product of 1-D Gaussian-kernel density estimates. Models fitted for
classification often use only part of the layout, e.g. ``(f0, c)`` for the
amplitude channel or ``z`` alone for the phase channel.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import NumericalError
from .fpca import (
    HorizontalFpca,
    VerticalFpca,
    horizontal_fpca,
    select_components,
    vertical_fpca,
)
from .funcrep import Grid, SampledFunction
from .srsf import Srsf, from_srsf
from .warpspace import Psi, ShootingVector, Warp, from_psi, sphere_exp

FORMAT = "elasticfda.genmodel"
FORMAT_VERSION = 1
RIDGE_SCALE = 1e-8
RIDGE_FLOOR = 1e-12
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class CoefficientSample:
    f0: float
    c: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float)).ravel()
        z = np.atleast_1d(np.asarray(self.z, dtype=float)).ravel()
        if not (math.isfinite(self.f0) and np.all(np.isfinite(c)) and np.all(np.isfinite(z))):
            raise ValueError("coefficient sample has non-finite entries")
        object.__setattr__(self, "f0", float(self.f0))
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class Layout:
    """Which blocks a model covers: ``f0`` (optional), ``k1`` c's, ``k2`` z's."""

    has_f0: bool
    k1: int
    k2: int

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.dim == 0:
            raise ValueError(f"empty or invalid layout {self}")

    @property
    def dim(self) -> int:
        return int(self.has_f0) + self.k1 + self.k2

    def vector(self, s: CoefficientSample) -> np.ndarray:
        parts = []
        if self.has_f0:
            parts.append([s.f0])
        if self.k1:
            if s.c.size != self.k1:
                raise ValueError(f"expected {self.k1} vertical coefficients, got {s.c.size}")
            parts.append(s.c)
        if self.k2:
            if s.z.size != self.k2:
                raise ValueError(f"expected {self.k2} horizontal coefficients, got {s.z.size}")
            parts.append(s.z)
        return np.concatenate(parts)

    def unpack(self, x: np.ndarray) -> CoefficientSample:
        i = int(self.has_f0)
        f0 = float(x[0]) if self.has_f0 else 0.0
        return CoefficientSample(f0, x[i : i + self.k1], x[i + self.k1 :])

    def indices(self, part: str) -> tuple[Layout, np.ndarray]:
        i = int(self.has_f0)
        if part == "amplitude":
            return Layout(self.has_f0, self.k1, 0), np.arange(i + self.k1)
        if part == "phase":
            return Layout(False, 0, self.k2), np.arange(i + self.k1, self.dim)
        raise ValueError(f"unknown part {part!r}; expected 'amplitude' or 'phase'")


def training_samples(
    aligned: Sequence[Srsf],
    vertical: VerticalFpca | None,
    horizontal: HorizontalFpca | None,
    k1: int,
    k2: int,
) -> list[CoefficientSample]:
    """Coefficient samples of the training set, truncated to ``k1``/``k2``."""
    n = len(aligned)
    c = vertical.coefficients[:, :k1] if vertical is not None else np.zeros((n, 0))
    z = horizontal.coefficients[:, :k2] if horizontal is not None else np.zeros((n, 0))
    return [CoefficientSample(q.f0, c[i], z[i]) for i, q in enumerate(aligned)]


def _ridge(cov: np.ndarray) -> float:
    tr = float(np.trace(cov))
    return RIDGE_SCALE * tr / cov.shape[0] if tr > 0 else RIDGE_FLOOR


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Multivariate normal on a coefficient layout.

    ``covariance`` is the fitted estimate; ``ridge`` is added to its diagonal
    before any density evaluation. Sampling uses the unridged covariance.
    """

    layout: Layout
    mean: np.ndarray
    covariance: np.ndarray
    ridge: float
    mode: str
    vertical: VerticalFpca | None = None
    horizontal: HorizontalFpca | None = None

    @cached_property
    def _chol(self) -> np.ndarray:
        d = self.layout.dim
        try:
            return np.linalg.cholesky(self.covariance + self.ridge * np.eye(d))
        except np.linalg.LinAlgError as exc:
            raise NumericalError("covariance is not positive definite after ridge") from exc

    def marginal(self, part: str) -> GaussianModel:
        layout, idx = self.layout.indices(part)
        cov = self.covariance[np.ix_(idx, idx)]
        return GaussianModel(
            layout, self.mean[idx], cov, _ridge(cov), self.mode, self.vertical, self.horizontal
        )


def fit_gaussian(
    samples: Sequence[CoefficientSample],
    mode: str = "diagonal-blocks",
    layout: Layout | None = None,
    vertical: VerticalFpca | None = None,
    horizontal: HorizontalFpca | None = None,
) -> GaussianModel:
    """Fit a Gaussian with mean ``[mean f0, 0, 0]``.

    ``diagonal-blocks`` zeroes every cross-covariance and takes the c and z
    variances from the fPCA spectra when the bases are given (the coefficient
    sample variances otherwise). ``full-joint`` uses the full sample covariance.
    """
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples")
    if layout is None:
        layout = Layout(True, samples[0].c.size, samples[0].z.size)
    X = np.vstack([layout.vector(s) for s in samples])
    mean = np.zeros(layout.dim)
    if layout.has_f0:
        mean[0] = X[:, 0].mean()

    if mode == "diagonal-blocks":
        var = X.var(axis=0, ddof=1)
        i = int(layout.has_f0)
        if vertical is not None and layout.k1:
            var[i : i + layout.k1] = vertical.singular_values[: layout.k1]
        if horizontal is not None and layout.k2:
            var[i + layout.k1 :] = horizontal.singular_values[: layout.k2]
        cov = np.diag(var)
    elif mode == "full-joint":
        cov = np.atleast_2d(np.cov(X, rowvar=False))
    else:
        raise ValueError(f"unknown mode {mode!r}; expected 'diagonal-blocks' or 'full-joint'")
    cov = 0.5 * (cov + cov.T)
    return GaussianModel(layout, mean, cov, _ridge(cov), mode, vertical, horizontal)


def gaussian_log_likelihood(model: GaussianModel, s: CoefficientSample | np.ndarray) -> float:
    x = model.layout.vector(s) if isinstance(s, CoefficientSample) else np.asarray(s, float)
    if x.shape != (model.layout.dim,):
        raise ValueError(f"expected a vector of length {model.layout.dim}")
    L = model._chol
    r = np.linalg.solve(L, x - model.mean)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return float(-0.5 * (x.size * _LOG_2PI + logdet + r @ r))


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Product of per-coordinate Gaussian-kernel density estimates."""

    layout: Layout
    data: np.ndarray
    bandwidths: np.ndarray
    floored: tuple[int, ...] = field(default=())
    vertical: VerticalFpca | None = None
    horizontal: HorizontalFpca | None = None

    def __post_init__(self):
        if np.any(~(self.bandwidths > 0)):
            raise ValueError("bandwidths must be positive")

    def marginal(self, part: str) -> KdeModel:
        layout, idx = self.layout.indices(part)
        floored = tuple(int(np.flatnonzero(idx == k)[0]) for k in self.floored if k in idx)
        return KdeModel(
            layout, self.data[:, idx], self.bandwidths[idx], floored, self.vertical, self.horizontal
        )


def silverman_bandwidth(x: np.ndarray) -> tuple[float, bool]:
    """Silverman's rule of thumb; returns ``(b, floored)``."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1)
    q75, q25 = np.percentile(x, [75, 25])
    b = 0.9 * min(sd, (q75 - q25) / 1.34) * x.size ** (-0.2)
    floor = 1e-6 * (np.ptp(x) + 1e-12)
    if b < floor:
        return floor, True
    return float(b), False


def fit_kde(
    samples: Sequence[CoefficientSample],
    bandwidth: Union[str, float] = "silverman",
    layout: Layout | None = None,
    vertical: VerticalFpca | None = None,
    horizontal: HorizontalFpca | None = None,
) -> KdeModel:
    """``bandwidth`` is ``"silverman"`` or a fixed positive number."""
    n = len(samples)
    if n < 2:
        raise ValueError("need at least two samples")
    if layout is None:
        layout = Layout(True, samples[0].c.size, samples[0].z.size)
    X = np.vstack([layout.vector(s) for s in samples])
    floored: list[int] = []
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        bw = np.empty(layout.dim)
        for k in range(layout.dim):
            bw[k], flag = silverman_bandwidth(X[:, k])
            if flag:
                floored.append(k)
        if floored:
            warnings.warn(
                f"degenerate coordinates {floored}: bandwidth floored", RuntimeWarning, stacklevel=2
            )
    else:
        b = float(bandwidth)
        if not b > 0:
            raise ValueError("fixed bandwidth must be positive")
        bw = np.full(layout.dim, b)
    return KdeModel(layout, X, bw, tuple(floored), vertical, horizontal)


def kde_log_densities(model: KdeModel, x: np.ndarray) -> np.ndarray:
    """Per-coordinate log densities at ``x`` (log-sum-exp, so always finite)."""
    u = (x[None, :] - model.data) / model.bandwidths
    a = -0.5 * u * u
    amax = a.max(axis=0)
    lse = amax + np.log(np.exp(a - amax).sum(axis=0))
    n = model.data.shape[0]
    return lse - math.log(n) - np.log(model.bandwidths) - 0.5 * _LOG_2PI


def kde_log_likelihood(model: KdeModel, s: CoefficientSample | np.ndarray) -> float:
    x = model.layout.vector(s) if isinstance(s, CoefficientSample) else np.asarray(s, float)
    if x.shape != (model.layout.dim,):
        raise ValueError(f"expected a vector of length {model.layout.dim}")
    return float(kde_log_densities(model, x).sum())


Model = Union[GaussianModel, KdeModel]


def log_likelihood(model: Model, s: CoefficientSample | np.ndarray) -> float:
    if isinstance(model, GaussianModel):
        return gaussian_log_likelihood(model, s)
    return kde_log_likelihood(model, s)


def reconstruct_amplitude(basis: VerticalFpca, c, f0: float | None = None) -> SampledFunction:
    """Function with SRSF ``mu_q + sum_j c_j U_j``.

    With ``f0=None`` the initial value is model-driven (taken from the f0 row of
    the directions); an explicit ``f0`` takes precedence.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.size > basis.p:
        raise ValueError(f"at most {basis.p} coefficients, got {c.size}")
    h = basis.mu_h + basis.directions[:, : c.size] @ c
    start = h[-1] if f0 is None else float(f0)
    return from_srsf(Srsf(basis.grid, h[:-1], start))


def reconstruct_phase(basis: HorizontalFpca, z) -> Warp:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size > basis.p:
        raise ValueError(f"at most {basis.p} coefficients, got {z.size}")
    v = basis.directions[:, : z.size] @ z
    return from_psi(sphere_exp(basis.mu_psi, ShootingVector(basis.grid, v)))


def compose(f: SampledFunction, g: Warp) -> SampledFunction:
    """``f(g(t))`` by linear interpolation; ``f`` is on the same grid as ``g``."""
    return SampledFunction(f.grid, np.interp(g.values, f.grid.points, f.values))


def _generator(rng) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def draw_coefficients(model: Model, rng=None, size: int = 1) -> np.ndarray:
    """``size`` coefficient vectors, one per row, in layout order.

    Gaussian: eigen-factor of the unridged covariance, so a zero covariance
    always draws the mean. KDE: smoothed bootstrap, independently per coordinate.
    """
    gen = _generator(rng)
    d = model.layout.dim
    if isinstance(model, GaussianModel):
        w, V = np.linalg.eigh(model.covariance)
        scale = V * np.sqrt(np.clip(w, 0.0, None))
        return model.mean + gen.standard_normal((size, d)) @ scale.T
    n = model.data.shape[0]
    rows = gen.integers(0, n, size=(size, d))
    return model.data[rows, np.arange(d)] + model.bandwidths * gen.standard_normal((size, d))


def sample(
    model: Model, rng: Union[int, np.random.Generator, None] = None
) -> tuple[CoefficientSample, SampledFunction]:
    """Draw ``(f0, c, z)`` and return it with the function ``f^s(gamma^s(t))``.

    ``rng`` is a seed or a generator; passing the same generator repeatedly
    yields a reproducible stream.
    """
    layout = model.layout
    if model.vertical is None or model.horizontal is None or not layout.has_f0:
        raise ValueError("sampling needs a full (f0, c, z) model with both bases")
    s = layout.unpack(draw_coefficients(model, _generator(rng))[0])
    f = reconstruct_amplitude(model.vertical, s.c, s.f0)
    g = reconstruct_phase(model.horizontal, s.z)
    return s, compose(f, g)


def fit_function_model(
    aligned: Sequence[Srsf],
    warps: Sequence[Warp],
    family: str = "gaussian",
    threshold: float = 0.95,
    k1: int | None = None,
    k2: int | None = None,
    mode: str = "diagonal-blocks",
    bandwidth: Union[str, float] = "silverman",
) -> Model:
    """Vertical and horizontal fPCA of a separation, then a model on ``(f0, c, z)``.

    ``k1``/``k2`` default to the smallest counts reaching ``threshold`` energy.
    """
    vb = vertical_fpca(aligned)
    hb = horizontal_fpca(warps)
    k1 = select_components(vb.singular_values, threshold) if k1 is None else k1
    k2 = select_components(hb.singular_values, threshold) if k2 is None else k2
    samples = training_samples(aligned, vb, hb, k1, k2)
    layout = Layout(True, k1, k2)
    if family == "gaussian":
        return fit_gaussian(samples, mode, layout, vb, hb)
    if family == "kde":
        return fit_kde(samples, bandwidth, layout, vb, hb)
    raise ValueError(f"unknown model family {family!r}; expected 'gaussian' or 'kde'")


# -- serialization -------------------------------------------------------------


def _grid_doc(g: Grid) -> dict:
    return {"t0": g.t0, "t1": g.t1, "n": g.n}


def _mat(a: np.ndarray) -> list:
    return np.asarray(a, dtype=float).tolist()


def vertical_to_dict(b: VerticalFpca) -> dict:
    return {
        "grid": _grid_doc(b.grid),
        "mu_h": _mat(b.mu_h),
        "directions": _mat(b.directions),
        "singular_values": _mat(b.singular_values),
        "coefficients": _mat(b.coefficients),
        "energy_fraction": _mat(b.energy_fraction),
        "total_variance": b.total_variance,
    }


def horizontal_to_dict(b: HorizontalFpca) -> dict:
    return {
        "grid": _grid_doc(b.grid),
        "mu_psi": _mat(b.mu_psi.values),
        "mean_warp": _mat(b.mean_warp.values),
        "directions": _mat(b.directions),
        "singular_values": _mat(b.singular_values),
        "coefficients": _mat(b.coefficients),
        "energy_fraction": _mat(b.energy_fraction),
        "total_variance": b.total_variance,
    }


def _arr(x, ndmin=1) -> np.ndarray:
    return np.array(x, dtype=float, ndmin=ndmin)


def vertical_from_dict(d: dict) -> VerticalFpca:
    grid = Grid(**d["grid"])
    p = len(d["singular_values"])
    return VerticalFpca(
        grid,
        _arr(d["mu_h"]),
        _arr(d["directions"], 2).reshape(grid.n + 1, p),
        _arr(d["singular_values"]),
        _arr(d["coefficients"], 2).reshape(-1, p),
        _arr(d["energy_fraction"]),
        float(d["total_variance"]),
    )


def horizontal_from_dict(d: dict) -> HorizontalFpca:
    grid = Grid(**d["grid"])
    p = len(d["singular_values"])
    return HorizontalFpca(
        grid,
        Psi(grid, _arr(d["mu_psi"])),
        Warp(grid, _arr(d["mean_warp"])),
        _arr(d["directions"], 2).reshape(grid.n, p),
        _arr(d["singular_values"]),
        _arr(d["coefficients"], 2).reshape(-1, p),
        _arr(d["energy_fraction"]),
        float(d["total_variance"]),
    )


def model_to_dict(model: Model) -> dict:
    lay = model.layout
    doc = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "layout": {"has_f0": lay.has_f0, "k1": lay.k1, "k2": lay.k2},
        "vertical": vertical_to_dict(model.vertical) if model.vertical is not None else None,
        "horizontal": horizontal_to_dict(model.horizontal) if model.horizontal is not None else None,
    }
    if isinstance(model, GaussianModel):
        doc.update(
            kind="gaussian",
            mode=model.mode,
            mean=_mat(model.mean),
            covariance=_mat(model.covariance),
            ridge=model.ridge,
        )
    else:
        doc.update(
            kind="kde",
            data=_mat(model.data),
            bandwidths=_mat(model.bandwidths),
            floored=list(model.floored),
        )
    return doc


def model_from_dict(doc: dict) -> Model:
    if doc.get("format") != FORMAT:
        raise ValueError("not a generative-model document")
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model version {doc.get('version')!r}")
    layout = Layout(**doc["layout"])
    vb = vertical_from_dict(doc["vertical"]) if doc.get("vertical") else None
    hb = horizontal_from_dict(doc["horizontal"]) if doc.get("horizontal") else None
    d = layout.dim
    if doc["kind"] == "gaussian":
        return GaussianModel(
            layout,
            _arr(doc["mean"]),
            _arr(doc["covariance"], 2).reshape(d, d),
            float(doc["ridge"]),
            doc["mode"],
            vb,
            hb,
        )
    if doc["kind"] == "kde":
        return KdeModel(
            layout,
            _arr(doc["data"], 2).reshape(-1, d),
            _arr(doc["bandwidths"]),
            tuple(doc.get("floored", ())),
            vb,
            hb,
        )
    raise ValueError(f"unknown model kind {doc['kind']!r}")


def save_model(path, model: Model) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path) -> Model:
    return model_from_dict(json.loads(Path(path).read_text()))
