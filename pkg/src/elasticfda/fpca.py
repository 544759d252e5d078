"""Vertical (amplitude) and horizontal (phase) functional PCA.

Vertical fPCA works on aligned SRSFs with the initial value appended,
``h = [q(t_1), ..., q(t_T), f(0)]``, using plain Euclidean inner products.
Horizontal fPCA works on shooting vectors of the warps at their Karcher mean, in
the L2 (trapezoid-weighted) geometry of the sphere they are tangent to, so
principal directions are L2-orthonormal and tangent at the mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .funcrep import Grid, SampledFunction
from .srsf import Srsf, from_srsf
from .warpspace import (
    Psi,
    ShootingVector,
    Warp,
    WarpMean,
    from_psi,
    karcher_mean_warps,
    sphere_exp,
)


def _fix_signs(directions: np.ndarray) -> np.ndarray:
    # largest-magnitude entry of every column made positive
    idx = np.argmax(np.abs(directions), axis=0)
    signs = np.sign(directions[idx, np.arange(directions.shape[1])])
    signs[signs == 0] = 1.0
    return directions * signs


def _energy(sv: np.ndarray, total: float) -> np.ndarray:
    return sv / total if total > 0 else np.zeros_like(sv)


@dataclass(frozen=True, eq=False)
class VerticalFpca:
    grid: Grid
    mu_h: np.ndarray
    directions: np.ndarray
    singular_values: np.ndarray
    coefficients: np.ndarray
    energy_fraction: np.ndarray
    total_variance: float

    @property
    def p(self) -> int:
        return self.directions.shape[1]

    @property
    def mu_q(self) -> Srsf:
        return Srsf(self.grid, self.mu_h[:-1], self.mu_h[-1])

    @property
    def mean_f0(self) -> float:
        return float(self.mu_h[-1])

    def mean_function(self) -> SampledFunction:
        return from_srsf(self.mu_q)


def combined_vector(q: Srsf) -> np.ndarray:
    return np.append(q.values, q.f0)


def vertical_fpca(aligned: Sequence[Srsf], p: int | None = None) -> VerticalFpca:
    """PCA of ``[q_i, f_i(0)]`` for aligned SRSFs; ``p`` defaults to full rank."""
    n = len(aligned)
    if n < 2:
        raise ValueError("vertical fPCA needs at least two functions")
    grid = aligned[0].grid
    if any(q.grid != grid for q in aligned):
        raise ValueError("SRSFs must share a grid")
    dim = grid.n + 1
    max_p = min(n - 1, dim)
    if p is None:
        p = max_p
    if not 1 <= p <= max_p:
        raise ValueError(f"p must lie in [1, {max_p}], got {p}")

    H = np.vstack([combined_vector(q) for q in aligned])
    # anchored on the first row so identical inputs centre to exactly zero
    mu_h = H[0] + (H - H[0]).mean(axis=0)
    C = H - mu_h
    # K = C^T C / (n-1); its eigenpairs via the SVD of the scaled data matrix
    _, s, vt = np.linalg.svd(C / np.sqrt(n - 1), full_matrices=False)
    spectrum = s ** 2
    U = _fix_signs(vt[:p].T)
    sv = spectrum[:p]
    total = float(np.einsum("ij,ij->", C, C) / (n - 1))
    return VerticalFpca(grid, mu_h, U, sv, C @ U, _energy(sv, total), total)


def project_vertical(basis: VerticalFpca, q: Srsf, k: int | None = None) -> np.ndarray:
    k = basis.p if k is None else k
    return (combined_vector(q) - basis.mu_h) @ basis.directions[:, :k]


def principal_path_vertical(basis: VerticalFpca, j: int, tau: float) -> SampledFunction:
    """Point ``tau`` standard deviations along the ``j``-th (1-based) direction."""
    if not 1 <= j <= basis.p:
        raise ValueError(f"j must lie in [1, {basis.p}]")
    h = basis.mu_h + tau * np.sqrt(basis.singular_values[j - 1]) * basis.directions[:, j - 1]
    return from_srsf(Srsf(basis.grid, h[:-1], h[-1]))


@dataclass(frozen=True, eq=False)
class HorizontalFpca:
    grid: Grid
    mu_psi: Psi
    mean_warp: Warp
    directions: np.ndarray
    singular_values: np.ndarray
    coefficients: np.ndarray
    energy_fraction: np.ndarray
    total_variance: float

    @property
    def p(self) -> int:
        return self.directions.shape[1]


def _tangent_basis(mu_w: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of the unit vector ``mu_w``."""
    T = mu_w.size
    e = np.zeros(T)
    e[0] = 1.0
    u = mu_w - e
    nu = np.linalg.norm(u)
    if nu < 1e-14:
        return np.eye(T)[:, 1:]
    u /= nu
    householder = np.eye(T) - 2.0 * np.outer(u, u)
    return householder[:, 1:]


def horizontal_fpca(
    warps: Sequence[Warp],
    p: int | None = None,
    mean: WarpMean | None = None,
) -> HorizontalFpca:
    """PCA of shooting vectors of ``warps`` at their Karcher mean.

    The shooting vectors are not re-centred: at the Karcher mean their average
    vanishes up to the solver tolerance.
    """
    n = len(warps)
    if n < 2:
        raise ValueError("horizontal fPCA needs at least two warps")
    if mean is None:
        mean = karcher_mean_warps(warps)
    grid = mean.mu_psi.grid
    T = grid.n
    max_p = min(n - 1, T - 1)
    if p is None:
        p = max_p
    if not 1 <= p <= max_p:
        raise ValueError(f"p must lie in [1, {max_p}], got {p}")

    sw = np.sqrt(grid.weights())
    V = np.vstack([v.values for v in mean.vs]) * sw
    B = _tangent_basis(mean.mu_psi.values * sw)
    Y = V @ B
    _, s, vt = np.linalg.svd(Y / np.sqrt(n - 1), full_matrices=False)
    sv = (s ** 2)[:p]
    Uw = B @ vt[:p].T
    # ambient (unweighted) samples of the L2-orthonormal directions
    U = _fix_signs(Uw / sw[:, None])
    Uw = U * sw[:, None]
    total = float(np.einsum("ij,ij->", V, V) / (n - 1))
    return HorizontalFpca(grid, mean.mu_psi, mean.mean, U, sv, V @ Uw, _energy(sv, total), total)


def project_horizontal(basis: HorizontalFpca, v: ShootingVector, k: int | None = None) -> np.ndarray:
    k = basis.p if k is None else k
    w = basis.grid.weights()
    return (v.values * w) @ basis.directions[:, :k]


def principal_path_horizontal(basis: HorizontalFpca, j: int, tau: float) -> Warp:
    if not 1 <= j <= basis.p:
        raise ValueError(f"j must lie in [1, {basis.p}]")
    v = tau * np.sqrt(basis.singular_values[j - 1]) * basis.directions[:, j - 1]
    return from_psi(sphere_exp(basis.mu_psi, ShootingVector(basis.grid, v)))


@dataclass(frozen=True, eq=False)
class L2Fpca:
    """Plain PCA of raw function values (no phase-amplitude separation)."""

    grid: Grid
    mean: np.ndarray
    directions: np.ndarray
    singular_values: np.ndarray
    coefficients: np.ndarray
    energy_fraction: np.ndarray
    total_variance: float

    @property
    def p(self) -> int:
        return self.directions.shape[1]

    def reconstruct(self, c) -> SampledFunction:
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return SampledFunction(self.grid, self.mean + self.directions[:, : c.size] @ c)


def l2_fpca(fs: Sequence[SampledFunction], p: int | None = None) -> L2Fpca:
    n = len(fs)
    if n < 2:
        raise ValueError("fPCA needs at least two functions")
    grid = fs[0].grid
    if any(f.grid != grid for f in fs):
        raise ValueError("functions must share a grid")
    max_p = min(n - 1, grid.n)
    p = max_p if p is None else p
    if not 1 <= p <= max_p:
        raise ValueError(f"p must lie in [1, {max_p}], got {p}")
    F = np.vstack([f.values for f in fs])
    mean = F[0] + (F - F[0]).mean(axis=0)
    C = F - mean
    _, s, vt = np.linalg.svd(C / np.sqrt(n - 1), full_matrices=False)
    U = _fix_signs(vt[:p].T)
    sv = (s ** 2)[:p]
    total = float(np.einsum("ij,ij->", C, C) / (n - 1))
    return L2Fpca(grid, mean, U, sv, C @ U, _energy(sv, total), total)


def project_l2(basis: L2Fpca, f: SampledFunction, k: int | None = None) -> np.ndarray:
    k = basis.p if k is None else k
    return (f.values - basis.mean) @ basis.directions[:, :k]


def select_components(singular_values, threshold: float) -> int:
    """Smallest ``k`` whose leading values hold at least ``threshold`` of the total."""
    sv = np.asarray(singular_values, dtype=float)
    if sv.size == 0:
        raise ValueError("empty spectrum")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if threshold == 1:
        return int(sv.size)
    cum = np.cumsum(sv)
    total = cum[-1]
    if total <= 0:
        warnings.warn("all-zero spectrum; keeping one component", RuntimeWarning, stacklevel=2)
        return 1
    return int(np.searchsorted(cum / total, threshold, side="left") + 1)
