import warnings

import numpy as np
import pytest

from elasticfda import datasets
from elasticfda.align import separate
from elasticfda.fpca import (
    horizontal_fpca,
    principal_path_horizontal,
    principal_path_vertical,
    project_vertical,
    select_components,
    vertical_fpca,
)
from elasticfda.funcrep import Grid
from elasticfda.srsf import Srsf, from_srsf
from elasticfda.warpspace import Warp, inner, norm, sphere_distance, sphere_exp, ShootingVector, to_psi

from conftest import random_warp


@pytest.fixture(scope="module")
def fig2_separation():
    data = datasets.gen_bimodal_fig2(21, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return data, separate(data.observed)


def _random_srsfs(rng, n, T=40):
    g = Grid(0, 1, T)
    return [Srsf(g, rng.normal(size=T), rng.normal()) for _ in range(n)]


class TestVertical:
    def test_identical_inputs(self):
        g = Grid(0, 1, 11)
        q = Srsf(g, np.linspace(-1, 1, 11), 2.0)
        b = vertical_fpca([q, q, q], p=2)
        np.testing.assert_array_equal(b.singular_values, 0.0)
        np.testing.assert_array_equal(b.coefficients, 0.0)

    def test_rank_one(self, rng):
        g = Grid(0, 1, 20)
        u = rng.normal(size=21)
        u /= np.linalg.norm(u)
        mu = rng.normal(size=21)
        a = rng.normal(size=8)
        qs = [Srsf(g, (mu + ai * u)[:-1], (mu + ai * u)[-1]) for ai in a]
        b = vertical_fpca(qs, p=3)
        assert b.singular_values[0] == pytest.approx(np.var(a, ddof=1), rel=1e-10)
        assert np.all(b.singular_values[1:] <= 1e-10)
        assert abs(abs(b.directions[:, 0] @ u) - 1) <= 1e-10

    def test_p_out_of_range(self, rng):
        qs = _random_srsfs(rng, 5)
        with pytest.raises(ValueError):
            vertical_fpca(qs, p=5)
        with pytest.raises(ValueError):
            vertical_fpca(qs, p=0)

    def test_exactness(self, rng):
        qs = _random_srsfs(rng, 12)
        b = vertical_fpca(qs)
        assert b.p == 11
        np.testing.assert_allclose(b.directions.T @ b.directions, np.eye(b.p), atol=1e-8)
        for q, c in zip(qs, b.coefficients):
            rec = b.mu_h + b.directions @ c
            np.testing.assert_allclose(rec, np.append(q.values, q.f0), atol=1e-8)
        cov = np.cov(b.coefficients, rowvar=False)
        off = cov - np.diag(np.diag(cov))
        assert np.max(np.abs(off)) <= 1e-8 * b.singular_values[0]
        np.testing.assert_allclose(np.diag(cov), b.singular_values, rtol=1e-8)
        H = np.vstack([np.append(q.values, q.f0) for q in qs])
        K = np.cov(H, rowvar=False)
        assert b.singular_values.sum() == pytest.approx(np.trace(K), rel=1e-8)
        assert np.all(np.diff(b.singular_values) <= 0)
        np.testing.assert_allclose(project_vertical(b, qs[3]), b.coefficients[3], atol=1e-12)

    def test_sign_convention(self, rng):
        b = vertical_fpca(_random_srsfs(rng, 6))
        for col in b.directions.T:
            assert col[np.argmax(np.abs(col))] > 0

    def test_fig2_third_component_small(self, fig2_separation):
        _, res = fig2_separation
        sv = vertical_fpca(res.aligned).singular_values
        assert sv[2] / sv[0] <= 0.25

    def test_path_at_zero_is_mean(self, fig2_separation):
        _, res = fig2_separation
        b = vertical_fpca(res.aligned, p=3)
        mean = from_srsf(Srsf(b.grid, b.mu_h[:-1], b.mu_h[-1]))
        np.testing.assert_array_equal(principal_path_vertical(b, 1, 0.0).values, mean.values)

    def test_path_symmetry(self, fig2_separation):
        _, res = fig2_separation
        b = vertical_fpca(res.aligned, p=3)
        step = np.sqrt(b.singular_values[1]) * b.directions[:, 1]
        h_plus, h_minus = b.mu_h + step, b.mu_h - step
        np.testing.assert_allclose(h_plus + h_minus, 2 * b.mu_h, atol=1e-14)

    def test_first_path_moves_second_peak(self, fig2_separation):
        _, res = fig2_separation
        b = vertical_fpca(res.aligned, p=3)
        t = b.grid.points
        # the bump at +1.5 on [-3, 3] sits at t = 0.75
        window = (t > 0.6) & (t < 0.9)
        heights = [principal_path_vertical(b, 1, tau).values[window].max() for tau in (-2, -1, 0, 1, 2)]
        d = np.diff(heights)
        assert np.all(d > 0) or np.all(d < 0)


class TestHorizontal:
    def test_identity_warps(self):
        g = Grid(0, 1, 51)
        b = horizontal_fpca([Warp.identity(g)] * 4, p=2)
        np.testing.assert_allclose(b.singular_values, 0.0, atol=1e-24)
        np.testing.assert_allclose(b.coefficients, 0.0, atol=1e-12)

    def test_one_parameter_family(self):
        g = Grid(0, 1, 101)
        gs = [Warp(g, datasets.fig2_warp(a, g.points)) for a in np.linspace(-1, 1, 21)]
        b = horizontal_fpca(gs)
        assert b.energy_fraction[0] >= 0.9

    def test_orthonormal_and_tangent(self, rng):
        g = Grid(0, 1, 101)
        gs = [random_warp(rng, g, 1.5) for _ in range(10)]
        b = horizontal_fpca(gs)
        w = g.weights()
        gram = b.directions.T @ (b.directions * w[:, None])
        np.testing.assert_allclose(gram, np.eye(b.p), atol=1e-8)
        for col in b.directions.T:
            assert abs(inner(g, col, b.mu_psi.values)) <= 1e-6
        assert np.all(np.diff(b.singular_values) <= 0)
        assert b.singular_values.sum() == pytest.approx(b.total_variance, rel=1e-8)

    def test_paths(self, rng):
        g = Grid(0, 1, 101)
        gs = [random_warp(rng, g, 1.5) for _ in range(10)]
        b = horizontal_fpca(gs, p=3)
        np.testing.assert_allclose(principal_path_horizontal(b, 1, 0.0).values, b.mean_warp.values, atol=0)
        for j in (1, 2, 3):
            for tau in (-2, -1, -0.5, 0.5, 1, 2):
                w = principal_path_horizontal(b, j, tau)  # constructor checks invariants
                v = tau * np.sqrt(b.singular_values[j - 1]) * b.directions[:, j - 1]
                p = sphere_exp(b.mu_psi, ShootingVector(g, v))
                assert abs(sphere_distance(p, b.mu_psi) - abs(tau) * np.sqrt(b.singular_values[j - 1])) <= 1e-6

    def test_full_rank_reconstruction(self, rng):
        g = Grid(0, 1, 101)
        gs = [random_warp(rng, g) for _ in range(8)]
        b = horizontal_fpca(gs)
        from elasticfda.warpspace import karcher_mean_warps

        vs = karcher_mean_warps(gs).vs
        for v, z in zip(vs, b.coefficients):
            np.testing.assert_allclose(b.directions @ z, v.values, atol=1e-8)

    def test_bounded_coefficients_give_warps(self, rng):
        g = Grid(0, 1, 101)
        b = horizontal_fpca([random_warp(rng, g) for _ in range(8)])
        for _ in range(30):
            z = rng.normal(size=b.p) * np.sqrt(b.singular_values) * 3
            v = ShootingVector(g, b.directions @ z)
            from elasticfda.warpspace import from_psi

            from_psi(sphere_exp(b.mu_psi, v))


class TestSelectComponents:
    def test_examples(self):
        assert select_components([4, 0, 0], 0.9) == 1
        assert select_components([3, 1], 0.75) == 1
        assert select_components([3, 1], 0.76) == 2
        assert select_components([3, 1, 1e-18], 1.0) == 3

    def test_zero_spectrum(self):
        with pytest.warns(RuntimeWarning):
            assert select_components([0, 0, 0], 0.9) == 1

    def test_linear_scan_oracle(self, rng):
        for _ in range(200):
            sv = np.sort(rng.exponential(size=rng.integers(1, 12)))[::-1]
            thr = rng.uniform(0.05, 0.999)
            total = sum(sv)
            run, k = 0.0, 0
            for x in sv:
                run += x
                k += 1
                if run / total >= thr:
                    break
            assert select_components(sv, thr) == k
