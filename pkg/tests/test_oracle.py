"""Weight-space oracles: Gibbs conditionals, importance sampling, quadrature."""

import numpy as np
import pytest

from lbnn.chainstats import geweke_z
from lbnn.linalg import kron, vec
from lbnn.model import Dataset, NetworkShape, build_gram_set
from lbnn.oracle import (WeightState, _draw_layer, empirical_moments,
                         gibbs_posterior, gp_closed_form, layer_conditional,
                         load_chain, log_posterior, prior_importance,
                         quadrature_scalar, save_chain)
from lbnn.zero_temp import zt_mean


def _teacher(p, phat, n0, nd, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(p, n0))
    w = rng.normal(size=(n0, nd))
    return Dataset(X=x, Y=x @ w / np.sqrt(n0), Xhat=rng.normal(size=(phat, n0)))


REFERENCE = _teacher(2, 2, 3, 1, seed=42)
REF_SHAPE = NetworkShape((3, 5, 1), beta=1.0)


class TestGibbsPosterior:
    def test_depth1_matches_conjugate_closed_form(self):
        ds = _teacher(3, 2, 4, 2, seed=0)
        beta = 1.5
        states = gibbs_posterior(ds, NetworkShape((4, 2), beta=beta),
                                 sweeps=20_000, burn_in=0, seed=1)
        moments, _ = empirical_moments(states, ds)
        exact = gp_closed_form(ds, beta)
        z_mean = np.abs(moments.mean - exact.mean) / moments.mean_se
        assert z_mean.max() <= 3.0
        # 16 covariance entries: allow the family-wise fluctuation
        z_cov = np.abs(moments.cov - exact.cov) / np.maximum(moments.cov_se, 1e-12)
        assert z_cov.max() <= 3.5

    def test_tiny_beta_recovers_prior_scale(self):
        # likelihood off: W2 W2^T averages to the identity under the prior
        ds = _teacher(2, 2, 3, 2, seed=2)
        states = gibbs_posterior(ds, NetworkShape((3, 6, 2), beta=1e-10),
                                 sweeps=8_000, burn_in=200, seed=3)
        scales = np.stack([s.W[1] @ s.W[1].T for s in states])
        err = np.abs(scales.mean(axis=0) - np.eye(2))
        se = scales.std(axis=0) / np.sqrt(len(states))
        assert np.all(err <= 3 * se + 1e-3)

    def test_deterministic_given_seed(self):
        a = gibbs_posterior(REFERENCE, REF_SHAPE, sweeps=50, burn_in=10, seed=7)
        b = gibbs_posterior(REFERENCE, REF_SHAPE, sweeps=50, burn_in=10, seed=7)
        for sa, sb in zip(a, b):
            for wa, wb in zip(sa.W, sb.W):
                np.testing.assert_array_equal(wa, wb)

    def test_log_posterior_has_no_drift(self):
        states = gibbs_posterior(REFERENCE, REF_SHAPE, sweeps=6_000,
                                 burn_in=600, seed=4)
        trace = np.array([log_posterior(s, REFERENCE, REF_SHAPE.beta)
                          for s in states])
        assert abs(geweke_z(trace)) < 3.0

    def test_requires_finite_beta(self):
        with pytest.raises(ValueError, match="finite"):
            gibbs_posterior(REFERENCE, NetworkShape((3, 5, 1), beta=np.inf),
                            sweeps=10, burn_in=0, seed=0)


class TestLayerConditional:
    def test_draws_match_analytic_gaussian(self):
        # freeze the other layer and draw one conditional many times
        rng = np.random.default_rng(5)
        ds = _teacher(2, 1, 3, 1, seed=6)
        shape = NetworkShape((3, 4, 1), beta=2.0)
        w2 = rng.normal(size=(1, 4)) / 2.0
        # layer 1: prefix X, suffix w2
        mean, chol = layer_conditional(ds.X, w2, ds.Y, shape.beta, 3.0)
        cov = np.linalg.inv(chol @ chol.T)
        draws = np.stack([
            vec(_draw_layer(np.random.default_rng(1000 + i), ds.X, w2, ds.Y,
                            shape.beta, 3.0).T)
            for i in range(20_000)
        ])
        se_mean = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
        assert np.all(np.abs(draws.mean(axis=0) - mean) <= 3 * se_mean)
        emp_cov = np.cov(draws.T)
        var = np.diag(cov)
        se_cov = np.sqrt((np.outer(var, var) + cov**2) / draws.shape[0])
        assert np.all(np.abs(emp_cov - cov) <= 3.5 * se_cov)

    def test_precision_structure(self):
        ds = _teacher(2, 1, 3, 1, seed=7)
        q = np.array([[0.5, -0.25]])
        _, chol = layer_conditional(ds.X, q, ds.Y, 1.3, 3.0)
        precision = chol @ chol.T
        expected = 3.0 * np.eye(6) + 1.3 * kron(ds.X.T @ ds.X, q.T @ q)
        np.testing.assert_allclose(precision, expected, atol=1e-10)


class TestPriorImportance:
    def test_beta_zero_uniform_weights(self):
        ds = _teacher(2, 2, 3, 1, seed=8)
        moments = prior_importance(ds, NetworkShape((3, 5, 1), beta=0.0),
                                   num_samples=4_000, seed=0)
        assert moments.ess == pytest.approx(4_000)
        assert np.all(np.abs(moments.mean) <= 3 * moments.mean_se)

    def test_agrees_with_gibbs_on_tiny_instance(self):
        rng = np.random.default_rng(9)
        ds = Dataset(X=rng.normal(size=(1, 2)), Y=rng.normal(size=(1, 1)),
                     Xhat=rng.normal(size=(2, 2)))
        shape = NetworkShape((2, 3, 1), beta=0.5)
        snis = prior_importance(ds, shape, num_samples=60_000, seed=1)
        states = gibbs_posterior(ds, shape, sweeps=30_000, burn_in=3_000, seed=2)
        gibbs, _ = empirical_moments(states, ds)
        z = np.abs(snis.mean - gibbs.mean) / np.hypot(snis.mean_se, gibbs.mean_se)
        assert z.max() <= 3.0

    def test_agrees_with_quadrature(self):
        shape = NetworkShape((3, 5, 1), beta=1.0)
        snis = prior_importance(REFERENCE, shape, num_samples=60_000, seed=3)
        quad = quadrature_scalar(REFERENCE, shape)
        z = np.abs(snis.mean - quad.mean) / snis.mean_se
        assert z.max() <= 3.0


class TestQuadratureScalar:
    def test_beta_zero_prior_moments(self):
        ds = _teacher(2, 2, 3, 1, seed=10)
        grams = build_gram_set(ds)
        moments = quadrature_scalar(ds, NetworkShape((3, 5, 1), beta=0.0))
        np.testing.assert_allclose(moments.mean, np.zeros((2, 1)), atol=1e-9)
        np.testing.assert_allclose(moments.cov, grams.gxhxh, atol=1e-8)

    def test_large_beta_approaches_interpolation_limit(self):
        ds = _teacher(2, 2, 3, 1, seed=11)
        grams = build_gram_set(ds)
        moments = quadrature_scalar(ds, NetworkShape((3, 5, 1), beta=1e4))
        limit = zt_mean(grams, ds.Y)
        assert np.abs(moments.mean - limit).max() <= 1e-2

    def test_domain_checks(self):
        ds = _teacher(2, 2, 3, 2, seed=12)
        with pytest.raises(ValueError, match="single-output"):
            quadrature_scalar(ds, NetworkShape((3, 5, 2), beta=1.0))


class TestEmpiricalMoments:
    def test_degenerate_chain_flags_se(self):
        ds = _teacher(2, 2, 3, 1, seed=13)
        state = WeightState((np.ones((5, 3)), np.ones((1, 5))))
        moments, kernel = empirical_moments([state] * 50, ds)
        np.testing.assert_array_equal(moments.cov, np.zeros((2, 2)))
        assert np.isnan(moments.mean_se).all()
        assert np.isnan(kernel.se).all()

    def test_prior_chain_kernel_matches_gram(self):
        ds = _teacher(2, 2, 4, 1, seed=14)
        grams = build_gram_set(ds)
        states = gibbs_posterior(ds, NetworkShape((4, 6, 1), beta=1e-10),
                                 sweeps=8_000, burn_in=100, seed=5)
        _, kernel = empirical_moments(states, ds)
        z = np.abs(kernel.kernel - grams.gxx) / kernel.se
        assert z.max() <= 3.0


class TestChainPersistence:
    def test_roundtrip_identity(self, tmp_path):
        states = gibbs_posterior(REFERENCE, REF_SHAPE, sweeps=20, burn_in=5,
                                 seed=6)
        path = str(tmp_path / "chain.bin")
        save_chain(states, path, seed=6, beta=REF_SHAPE.beta)
        loaded, sidecar = load_chain(path)
        assert sidecar["states"] == len(states)
        assert sidecar["beta"] == REF_SHAPE.beta
        for a, b in zip(states, loaded):
            for wa, wb in zip(a.W, b.W):
                np.testing.assert_array_equal(wa, wb)
