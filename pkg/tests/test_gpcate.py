import numpy as np
import pytest

from fewcate.dataset import Dataset
from fewcate.designs import DesignSpec, gen_synthetic
from fewcate.gp import fit_gp
from fewcate.gpcate import (
    GpCateModel,
    cate_posterior,
    gpcate_fit,
    posterior_diagnostics,
)


def toy_data(rng, n0=25, n1=60):
    n = n0 + n1
    X = rng.standard_normal((n, 2))
    w = np.zeros(n, dtype=int)
    w[rng.choice(n, size=n1, replace=False)] = 1
    y = np.sin(X[:, 0]) + w * (1.0 + 0.5 * X[:, 1]) + 0.3 * rng.standard_normal(n)
    return Dataset(X, w, y)


class TestGpCateFit:
    def test_deterministic_under_seed(self, rng):
        data = toy_data(rng)
        a = gpcate_fit(data, rng=np.random.default_rng(3))
        b = gpcate_fit(data, rng=np.random.default_rng(3))
        assert a.control_gp.hyperparams == b.control_gp.hyperparams
        assert a.treated_gp.hyperparams == b.treated_gp.hyperparams

    def test_tiny_arm_rejected(self, rng):
        X = rng.standard_normal((5, 2))
        data = Dataset(X, np.array([0, 1, 1, 1, 1]), rng.standard_normal(5))
        with pytest.raises(ValueError, match="at least 2"):
            gpcate_fit(data)

    def test_treated_cap_recorded_and_applied(self, rng):
        data = toy_data(rng, n0=20, n1=80)
        m = gpcate_fit(data, treated_cap=30, rng=rng)
        assert m.treated_cap_used == 30
        assert m.treated_gp.train_x.shape[0] == 30
        uncapped = gpcate_fit(data, treated_cap=200, rng=rng)
        assert uncapped.treated_cap_used is None
        assert uncapped.treated_gp.train_x.shape[0] == 80

    def test_fitted_scales_within_bounds_on_design(self):
        s = gen_synthetic(DesignSpec("linear", 30, 500, seed=1))
        m = gpcate_fit(s.data, rng=np.random.default_rng(0))
        for gp_model in (m.control_gp, m.treated_gp):
            hp = gp_model.hyperparams
            assert np.isfinite([hp.amplitude, hp.length_scale, hp.noise]).all()
            assert 1e-4 < hp.length_scale < 1e4


class TestCatePosterior:
    def test_identical_arms_give_zero_mean(self, rng):
        # two identically-seeded fits on the same rows: the difference
        # posterior is exactly centred at zero with positive sd
        X = rng.standard_normal((40, 2))
        y = np.sin(X[:, 0]) + 0.2 * rng.standard_normal(40)
        gp0 = fit_gp(X, y, rng=np.random.default_rng(5))
        gp1 = fit_gp(X, y, rng=np.random.default_rng(5))
        model = GpCateModel(gp0, gp1)
        post = cate_posterior(model, rng.standard_normal((30, 2)))
        assert np.all(post.mean == 0.0)
        assert np.all(post.sd > 0.0)

    def test_normal_quantile_halfwidth(self, rng):
        data = toy_data(rng)
        m = gpcate_fit(data, rng=rng)
        post = cate_posterior(m, rng.standard_normal((10, 2)), level=0.95)
        np.testing.assert_allclose((post.hi - post.lo) / (2 * post.sd), 1.959964, atol=1e-6)

    def test_variance_additivity(self, rng):
        from fewcate.gp import latent_posterior

        data = toy_data(rng)
        m = gpcate_fit(data, rng=rng)
        Xq = rng.standard_normal((20, 2))
        post = cate_posterior(m, Xq)
        v0 = latent_posterior(m.control_gp, Xq).sd ** 2
        v1 = latent_posterior(m.treated_gp, Xq).sd ** 2
        np.testing.assert_allclose(post.sd**2, v0 + v1, atol=1e-12)

    def test_coverage_monotone_in_level(self, rng):
        s = gen_synthetic(DesignSpec("linear", 30, 200, seed=2, n_test=400))
        m = gpcate_fit(s.data, rng=rng)
        post = cate_posterior(m, s.test_x)
        covs = []
        for level in (0.80, 0.95, 0.99):
            lo, hi = post.interval(level)
            covs.append(np.mean((lo <= s.test_tau) & (s.test_tau <= hi)))
        assert covs[0] <= covs[1] <= covs[2]

    def test_widening_with_scarcity(self):
        widths = {}
        for n0 in (30, 500):
            s = gen_synthetic(DesignSpec("linear", n0, 500, seed=7, n_test=300))
            m = gpcate_fit(s.data, rng=np.random.default_rng(1))
            post = cate_posterior(m, s.test_x)
            widths[n0] = float(np.mean(post.hi - post.lo))
        assert widths[30] > widths[500]

    def test_level_validated(self, rng):
        data = toy_data(rng)
        m = gpcate_fit(data, rng=rng)
        with pytest.raises(ValueError, match="level"):
            cate_posterior(m, np.zeros((2, 2)), level=1.0)


class TestDiagnostics:
    def test_dense_data_contracts(self, rng):
        # plentiful 1-d data: posterior variance well below the prior
        X = np.linspace(-3, 3, 300)[:, None]
        w = np.tile([0, 1], 150)
        y = np.sin(X[:, 0]) + w * 1.0 + 0.2 * rng.standard_normal(300)
        m = gpcate_fit(Dataset(X, w, y), rng=rng)
        d = posterior_diagnostics(m, np.linspace(-2, 2, 100)[:, None])
        assert d.contraction_control < 0.1
        assert d.contraction_treated < 0.1

    def test_treated_share_small_in_few_placebo_regime(self):
        s = gen_synthetic(DesignSpec("linear", 30, 500, seed=3, n_test=500))
        m = gpcate_fit(s.data, rng=np.random.default_rng(0))
        d = posterior_diagnostics(m, s.test_x)
        assert d.treated_share < 0.5
