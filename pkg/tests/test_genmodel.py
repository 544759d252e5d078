import math
import warnings

import numpy as np
import pytest

from elasticfda import datasets
from elasticfda.align import separate
from elasticfda.errors import NumericalError
from elasticfda.fpca import horizontal_fpca, project_horizontal, project_vertical, vertical_fpca
from elasticfda.funcrep import Grid, SampledFunction
from elasticfda.genmodel import (
    CoefficientSample,
    GaussianModel,
    Layout,
    compose,
    draw_coefficients,
    fit_function_model,
    fit_gaussian,
    fit_kde,
    gaussian_log_likelihood,
    kde_log_likelihood,
    load_model,
    reconstruct_amplitude,
    reconstruct_phase,
    sample,
    save_model,
    silverman_bandwidth,
    training_samples,
)
from elasticfda.srsf import Srsf, from_srsf
from elasticfda.warpspace import ShootingVector, sphere_exp, sphere_log


def count_peaks(v):
    """Interior local maxima rising above 10% of the function's range."""
    r = v.max() - v.min()
    i = np.arange(1, v.size - 1)
    return int(((v[i] > v[i - 1]) & (v[i] >= v[i + 1]) & (v[i] - v.min() > 0.1 * r)).sum())


@pytest.fixture(scope="module")
def fig1():
    data = datasets.gen_unimodal_fig1(21, seed=0)
    res = separate(data.observed)
    vb = vertical_fpca(res.aligned)
    hb = horizontal_fpca(res.warps)
    return data, res, vb, hb


def _samples(X, k1, k2):
    return [CoefficientSample(x[0], x[1 : 1 + k1], x[1 + k1 :]) for x in X]


class TestGaussian:
    def test_all_equal(self):
        s = [CoefficientSample(2.5, [0.0, 0.0], [0.0])] * 5
        for mode in ("diagonal-blocks", "full-joint"):
            m = fit_gaussian(s, mode)
            assert m.mean[0] == 2.5
            np.testing.assert_array_equal(m.covariance, 0.0)
            assert m.ridge > 0
            assert math.isfinite(gaussian_log_likelihood(m, s[0]))

    def test_too_few(self):
        with pytest.raises(ValueError):
            fit_gaussian([CoefficientSample(0.0, [1.0], [1.0])])

    def test_bad_mode(self):
        s = [CoefficientSample(0.0, [1.0], [1.0]), CoefficientSample(1.0, [0.0], [2.0])]
        with pytest.raises(ValueError):
            fit_gaussian(s, "banded")

    def test_diagonal_blocks_use_spectra(self, fig1):
        _, res, vb, hb = fig1
        s = training_samples(res.aligned, vb, hb, 4, 3)
        m = fit_gaussian(s, layout=Layout(True, 4, 3), vertical=vb, horizontal=hb)
        np.testing.assert_allclose(np.diag(m.covariance)[1:5], vb.singular_values[:4], rtol=1e-8)
        np.testing.assert_allclose(np.diag(m.covariance)[5:], hb.singular_values[:3], rtol=1e-8)
        # coefficient sample variances agree with the spectrum without the bases too
        m2 = fit_gaussian(s)
        np.testing.assert_allclose(np.diag(m2.covariance)[1:5], vb.singular_values[:4], rtol=1e-8)
        off = m.covariance - np.diag(np.diag(m.covariance))
        assert np.all(off == 0)
        np.testing.assert_array_equal(m.mean[1:], 0.0)

    def test_full_joint_recovers_cross_block(self):
        rng = np.random.default_rng(5)
        d = 5
        A = rng.normal(size=(d, d))
        cov = A @ A.T / d + np.eye(d) * 0.2
        n = 2000
        X = rng.multivariate_normal(np.zeros(d), cov, size=n)
        m = fit_gaussian(_samples(X, 2, 2), "full-joint")
        S_hat, S = m.covariance[1:3, 3:5], cov[1:3, 3:5]
        # standard error of a sample covariance entry under normality
        se = np.sqrt((np.outer(np.diag(cov), np.diag(cov))[1:3, 3:5] + S**2) / n)
        assert np.linalg.norm(S_hat - S) <= 3 * np.linalg.norm(se)

    def test_loglik_closed_forms(self):
        for d in (1, 3, 6):
            lay = Layout(True, d - 1, 0)
            x = CoefficientSample(0.7, np.zeros(d - 1), [])
            mean = np.zeros(d)
            mean[0] = 0.7
            m = GaussianModel(lay, mean, np.eye(d), 0.0, "full-joint")
            assert gaussian_log_likelihood(m, x) == pytest.approx(-d / 2 * math.log(2 * math.pi), abs=1e-12)
            m4 = GaussianModel(lay, mean, 4 * np.eye(d), 0.0, "full-joint")
            want = -d / 2 * math.log(2 * math.pi) - d / 2 * math.log(4)
            assert gaussian_log_likelihood(m4, x) == pytest.approx(want, abs=1e-12)

    def test_loglik_dense_oracle(self, rng):
        for _ in range(20):
            d = int(rng.integers(1, 8))
            A = rng.normal(size=(d, d))
            cov = A @ A.T + 0.1 * np.eye(d)
            mean = rng.normal(size=d)
            m = GaussianModel(Layout(False, d, 0), mean, cov, 0.0, "full-joint")
            x = rng.normal(size=d) * 2
            r = x - mean
            want = -0.5 * (d * math.log(2 * math.pi) + math.log(np.linalg.det(cov)) + r @ np.linalg.inv(cov) @ r)
            assert gaussian_log_likelihood(m, x) == pytest.approx(want, abs=1e-10)

    def test_singular_without_ridge(self):
        m = GaussianModel(Layout(False, 2, 0), np.zeros(2), np.zeros((2, 2)), 0.0, "full-joint")
        with pytest.raises(NumericalError):
            gaussian_log_likelihood(m, np.zeros(2))

    def test_dimension_mismatch(self):
        m = GaussianModel(Layout(True, 2, 1), np.zeros(4), np.eye(4), 0.0, "full-joint")
        with pytest.raises(ValueError):
            gaussian_log_likelihood(m, CoefficientSample(0.0, [1.0], [1.0]))

    def test_sampler_calibration(self, rng):
        d = 4
        A = rng.normal(size=(d, d))
        cov = A @ A.T / d
        mean = rng.normal(size=d)
        m = GaussianModel(Layout(True, 2, 1), mean, cov, 0.0, "full-joint")
        n = 10_000
        X = draw_coefficients(m, 11, n)
        se_mean = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(X.mean(0) - mean) <= 4 * se_mean)
        se_cov = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov**2) / n)
        assert np.all(np.abs(np.cov(X, rowvar=False) - cov) <= 4 * se_cov)

    def test_marginals(self, rng):
        X = rng.normal(size=(30, 6))
        m = fit_gaussian(_samples(X, 3, 2), "full-joint")
        amp, ph = m.marginal("amplitude"), m.marginal("phase")
        assert amp.layout == Layout(True, 3, 0) and ph.layout == Layout(False, 0, 2)
        np.testing.assert_array_equal(amp.covariance, m.covariance[:4, :4])
        np.testing.assert_array_equal(ph.covariance, m.covariance[4:, 4:])


class TestKde:
    def test_one_point(self):
        m = fit_kde([CoefficientSample(0.0, [], [])] * 2, 1.0, Layout(True, 0, 0))
        assert math.exp(kde_log_likelihood(m, np.zeros(1))) == pytest.approx(1 / math.sqrt(2 * math.pi), rel=1e-14)

    def test_two_points(self):
        s = [CoefficientSample(-1.0, [], []), CoefficientSample(1.0, [], [])]
        m = fit_kde(s, 1.0, Layout(True, 0, 0))
        want = math.exp(-0.5) / math.sqrt(2 * math.pi)
        assert math.exp(kde_log_likelihood(m, np.zeros(1))) == pytest.approx(want, rel=1e-14)

    def test_integrates_to_one(self, rng):
        x = rng.normal(size=40) * rng.uniform(0.5, 3)
        s = [CoefficientSample(v, [], []) for v in x]
        m = fit_kde(s, layout=Layout(True, 0, 0))
        b = m.bandwidths[0]
        grid = np.linspace(x.min() - 12 * b, x.max() + 12 * b, 20001)
        dens = np.exp([kde_log_likelihood(m, np.array([g])) for g in grid])
        assert np.trapezoid(dens, grid) == pytest.approx(1.0, abs=1e-3)
        assert np.all(dens >= 0)

    def test_product_of_coordinates(self, rng):
        X = rng.normal(size=(15, 3))
        s = _samples(X, 1, 1)
        m = fit_kde(s, 0.4)
        q = rng.normal(size=3)
        parts = [fit_kde([CoefficientSample(v, [], []) for v in X[:, k]], 0.4, Layout(True, 0, 0)) for k in range(3)]
        want = sum(kde_log_likelihood(p, q[k : k + 1]) for k, p in enumerate(parts))
        assert kde_log_likelihood(m, q) == pytest.approx(want, abs=1e-12)

    def test_far_query_finite(self, rng):
        m = fit_kde(_samples(rng.normal(size=(10, 3)), 1, 1))
        assert math.isfinite(kde_log_likelihood(m, np.full(3, 1e6)))

    def test_silverman(self, rng):
        x = rng.normal(size=50)
        b, flag = silverman_bandwidth(x)
        q75, q25 = np.percentile(x, [75, 25])
        assert not flag
        assert b == pytest.approx(0.9 * min(x.std(ddof=1), (q75 - q25) / 1.34) * 50 ** -0.2)

    def test_degenerate_coordinate_floored(self):
        s = [CoefficientSample(1.0, [float(i)], []) for i in range(5)]
        with pytest.warns(RuntimeWarning):
            m = fit_kde(s)
        assert m.floored == (0,)
        assert m.bandwidths[0] > 0

    def test_fixed_bandwidth_positive(self):
        s = [CoefficientSample(0.0, [], []), CoefficientSample(1.0, [], [])]
        with pytest.raises(ValueError):
            fit_kde(s, 0.0, Layout(True, 0, 0))

    def test_smoothed_bootstrap_moments(self):
        X = np.array([[-1.0], [1.0]])
        m = fit_kde([CoefficientSample(x[0], [], []) for x in X], 0.5, Layout(True, 0, 0))
        draws = draw_coefficients(m, 3, 20_000)[:, 0]
        # mixture of N(-1, .25) and N(1, .25): mean 0, variance 1.25
        assert abs(draws.mean()) <= 4 * math.sqrt(1.25 / 20_000)
        assert draws.var() == pytest.approx(1.25, rel=0.03)


class TestReconstruction:
    def test_zero_coefficients_give_mean(self, fig1):
        _, res, vb, hb = fig1
        f = reconstruct_amplitude(vb, np.zeros(3), vb.mean_f0)
        np.testing.assert_allclose(f.values, vb.mean_function().values, atol=1e-14)
        np.testing.assert_allclose(reconstruct_phase(hb, np.zeros(2)).values, hb.mean_warp.values, atol=1e-14)

    def test_training_amplitude_roundtrip(self, fig1):
        _, res, vb, _ = fig1
        for i in (0, 7, 20):
            f = reconstruct_amplitude(vb, vb.coefficients[i], res.aligned[i].f0)
            np.testing.assert_allclose(f.values, from_srsf(res.aligned[i]).values, atol=1e-6)

    def test_model_driven_f0(self, fig1):
        _, res, vb, _ = fig1
        f = reconstruct_amplitude(vb, vb.coefficients[4])
        assert f.values[0] == pytest.approx(res.aligned[4].f0, abs=1e-8)

    def test_affine_in_srsf(self, fig1, rng):
        _, _, vb, _ = fig1
        c1, c2 = rng.normal(size=3), rng.normal(size=3)
        q = lambda c: vb.mu_h[:-1] + vb.directions[:-1, :3] @ c
        np.testing.assert_allclose(q(c1 + c2), q(c1) + q(c2) - vb.mu_h[:-1], atol=1e-12)
        # the function built from q(c) has exactly that SRSF before integration
        f = reconstruct_amplitude(vb, c1, 0.0)
        np.testing.assert_allclose(f.values, from_srsf(Srsf(vb.grid, q(c1), 0.0)).values, atol=1e-14)

    def test_training_phase_roundtrip(self, fig1):
        _, res, _, hb = fig1
        for i in range(0, 21, 5):
            g = reconstruct_phase(hb, hb.coefficients[i])
            assert np.max(np.abs(g.values - res.warps[i].values)) <= 2e-2

    def test_projection_idempotent(self, fig1):
        _, res, vb, hb = fig1
        for i in (1, 9):
            h = vb.mu_h + vb.directions @ vb.coefficients[i]
            q = Srsf(vb.grid, h[:-1], h[-1])
            np.testing.assert_allclose(project_vertical(vb, q), vb.coefficients[i], atol=1e-10)
            v = ShootingVector(hb.grid, hb.directions @ hb.coefficients[i])
            z = project_horizontal(hb, sphere_log(hb.mu_psi, sphere_exp(hb.mu_psi, v)))
            np.testing.assert_allclose(z, hb.coefficients[i], atol=1e-8)

    def test_bounded_z_gives_warps(self, fig1, rng):
        _, _, _, hb = fig1
        for _ in range(20):
            reconstruct_phase(hb, rng.normal(size=hb.p) * 3 * np.sqrt(hb.singular_values))

    def test_too_many_coefficients(self, fig1):
        _, _, vb, hb = fig1
        with pytest.raises(ValueError):
            reconstruct_amplitude(vb, np.zeros(vb.p + 1))
        with pytest.raises(ValueError):
            reconstruct_phase(hb, np.zeros(hb.p + 1))


class TestSampling:
    def test_zero_covariance(self, fig1):
        _, res, vb, hb = fig1
        lay = Layout(True, 2, 2)
        mean = np.zeros(5)
        mean[0] = vb.mean_f0
        m = GaussianModel(lay, mean, np.zeros((5, 5)), 1e-12, "diagonal-blocks", vb, hb)
        want = compose(vb.mean_function(), hb.mean_warp).values
        for seed in range(3):
            _, f = sample(m, seed)
            np.testing.assert_allclose(f.values, want, atol=1e-14)

    def test_deterministic(self, fig1):
        _, res, _, _ = fig1
        for family in ("gaussian", "kde"):
            m = fit_function_model(res.aligned, res.warps, family)
            a = [sample(m, np.random.default_rng(9))[1].values for _ in range(2)]
            np.testing.assert_array_equal(a[0], a[1])

    def test_z_zero_close_to_amplitude(self, fig1):
        _, res, vb, hb = fig1
        m = fit_function_model(res.aligned, res.warps, k1=3, k2=2)
        s, _ = sample(m, 4)
        f = reconstruct_amplitude(vb, s.c, s.f0)
        g0 = reconstruct_phase(hb, np.zeros(2))
        assert np.max(np.abs(compose(f, g0).values - f.values)) <= 2e-2

    def test_needs_bases(self):
        m = GaussianModel(Layout(True, 1, 1), np.zeros(3), np.eye(3), 0.0, "full-joint")
        with pytest.raises(ValueError):
            sample(m, 0)

    def test_fig1_samples_unimodal(self, fig1):
        _, res, _, _ = fig1
        m = fit_function_model(res.aligned, res.warps)
        rng = np.random.default_rng(0)
        frac = np.mean([count_peaks(sample(m, rng)[1].values) == 1 for _ in range(200)])
        assert frac >= 0.9


class TestSerialization:
    @pytest.mark.parametrize("family", ["gaussian", "kde"])
    def test_roundtrip(self, fig1, tmp_path, family):
        _, res, _, _ = fig1
        m = fit_function_model(res.aligned, res.warps, family)
        save_model(tmp_path / "m.json", m)
        m2 = load_model(tmp_path / "m.json")
        assert type(m2) is type(m) and m2.layout == m.layout
        a, b = sample(m, 3), sample(m2, 3)
        np.testing.assert_array_equal(a[1].values, b[1].values)
        s = a[0]
        if family == "gaussian":
            assert gaussian_log_likelihood(m, s) == gaussian_log_likelihood(m2, s)
        else:
            assert kde_log_likelihood(m, s) == kde_log_likelihood(m2, s)

    def test_version_checked(self, fig1, tmp_path):
        import json

        _, res, _, _ = fig1
        save_model(tmp_path / "m.json", fit_function_model(res.aligned, res.warps))
        doc = json.loads((tmp_path / "m.json").read_text())
        doc["version"] = 99
        (tmp_path / "m.json").write_text(json.dumps(doc))
        with pytest.raises(ValueError):
            load_model(tmp_path / "m.json")
