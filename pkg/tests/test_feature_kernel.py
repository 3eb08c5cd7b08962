"""Posterior-mean feature kernel: corrections, averages, and limits."""

import numpy as np
import pytest
from numpy.linalg import slogdet, solve

from lbnn.asymptotics import kernel_wide
from lbnn.feature_kernel import (kernel_correction, kernel_correction_scalar,
                                 mean_kernel, zt_mean_kernel)
from lbnn.linalg import kron, psd_sqrt, symmetrize, vec
from lbnn.model import Dataset, NetworkShape, build_gram_set
from lbnn.oracle import quadrature_scalar_kernel
from lbnn.zero_temp import ScaleMoments, zt_scale_moments
from tests.test_zero_temp import gig_moments_quadrature


def _teacher(p, phat, n0, nd, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(p, n0))
    w = rng.normal(size=(n0, nd))
    return Dataset(X=x, Y=x @ w / np.sqrt(n0), Xhat=rng.normal(size=(phat, n0)))


def _random_pd(n, rng):
    m = rng.normal(size=(n, n + 3))
    return symmetrize(m @ m.T / (n + 3))


class TestKernelCorrection:
    def test_zero_beta_vanishes(self):
        ds = _teacher(3, 2, 5, 2, seed=0)
        grams = build_gram_set(ds)
        L = _random_pd(2, np.random.default_rng(1))
        np.testing.assert_array_equal(kernel_correction(grams, ds.Y, L, 0.0),
                                      np.zeros((3, 3)))

    def test_scalar_specialization_matches(self):
        ds = _teacher(4, 2, 6, 1, seed=2)
        grams = build_gram_set(ds)
        for lam in (0.3, 1.0, 2.7):
            a = kernel_correction(grams, ds.Y, np.array([[lam]]), 1.4)
            b = kernel_correction_scalar(grams, ds.Y[:, 0], lam, 1.4)
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_matches_weight_space_mgf_oracle(self):
        # independent oracle: finite differences of the exact Gaussian
        # integral over the first-layer weights at fixed scale
        rng = np.random.default_rng(3)
        p, nd, n0, n1 = 3, 2, 5, 7
        beta = 0.9
        ds = _teacher(p, 2, n0, nd, seed=4)
        grams = build_gram_set(ds)
        L = _random_pd(nd, rng)
        factor = np.vstack([psd_sqrt(L), np.zeros((n1 - nd, nd))])
        a = kron(ds.X, factor.T)
        b = beta * a.T @ vec(ds.Y)
        ata = beta * (a.T @ a)

        def log_integral(j):
            prec = n0 * np.eye(n0) + ds.X.T @ j @ ds.X / n1
            q = kron(prec, np.eye(n1)) + ata
            return -0.5 * slogdet(q)[1] + 0.5 * b @ solve(q, b)

        h = 1e-5
        k_fd = np.empty((p, p))
        for mu in range(p):
            for nu in range(mu + 1):
                direction = np.zeros((p, p))
                if mu == nu:
                    direction[mu, mu] = 1.0
                    scale = 2.0
                else:
                    direction[mu, nu] = direction[nu, mu] = 1.0
                    scale = 1.0
                slope = (log_integral(h * direction)
                         - log_integral(-h * direction)) / (2 * h)
                k_fd[mu, nu] = k_fd[nu, mu] = -scale * slope
        k_direct = grams.gxx + kernel_correction(grams, ds.Y, L, beta) / n1
        np.testing.assert_allclose(k_fd, k_direct, atol=1e-6)

    def test_identity_scale_reproduces_wide_formula(self):
        # correction at L = I over n1 equals the large-width closed form
        for nd, seed in ((1, 5), (3, 6)):
            ds = _teacher(4, 2, 6, nd, seed=seed)
            grams = build_gram_set(ds)
            n1, beta = 11, 2.3
            corr = kernel_correction(grams, ds.Y, np.eye(nd), beta)
            direct = grams.gxx + corr / n1
            closed = kernel_wide(grams, nd / n1, beta)
            np.testing.assert_allclose(direct, closed, atol=1e-10)


class TestMeanKernel:
    def test_zero_beta_returns_gram_exactly(self):
        ds = _teacher(3, 2, 5, 1, seed=7)
        grams = build_gram_set(ds)
        est = mean_kernel(ds, NetworkShape((5, 6, 1), beta=0.0), 400, seed=0)
        np.testing.assert_array_equal(est.kernel, grams.gxx)

    def test_depth1_returns_gram_exactly(self):
        ds = _teacher(3, 2, 5, 1, seed=8)
        grams = build_gram_set(ds)
        est = mean_kernel(ds, NetworkShape((5, 1), beta=1.0), 16, seed=0)
        np.testing.assert_array_equal(est.kernel, grams.gxx)
        assert est.regime == "monte_carlo"

    def test_matches_scalar_quadrature(self):
        ds = _teacher(2, 2, 3, 1, seed=9)
        shape = NetworkShape((3, 5, 1), beta=1.0)
        est = mean_kernel(ds, shape, num_samples=40_000, seed=3)
        ref = quadrature_scalar_kernel(ds, shape)
        z = np.abs(est.kernel - ref) / np.maximum(est.se, 1e-12)
        assert z.max() <= 3.0

    def test_wide_limit_bridge(self):
        # at n1 = 1024 the Monte Carlo correction is within 20% of the
        # large-width closed form, relative to the correction size
        ds = _teacher(3, 2, 4, 1, seed=10)
        grams = build_gram_set(ds)
        beta, n1 = 2.0, 1024
        est = mean_kernel(ds, NetworkShape((4, n1, 1), beta=beta), 20_000, seed=4)
        wide = kernel_wide(grams, 1.0 / n1, beta)
        rel = (np.linalg.norm(est.kernel - wide)
               / np.linalg.norm(wide - grams.gxx))
        assert rel <= 0.2

    def test_symmetric_psd_within_clamp(self):
        for beta, nd, seed in ((0.5, 1, 11), (2.0, 2, 12)):
            ds = _teacher(3, 2, 5, nd, seed=seed)
            shape = NetworkShape((5, 6, nd), beta=beta)
            est = mean_kernel(ds, shape, 3000, seed=5)
            np.testing.assert_array_equal(est.kernel, est.kernel.T)
            w = np.linalg.eigvalsh(est.kernel)
            assert w.min() >= -1e-10 * max(1.0, np.trace(est.kernel))

    def test_shard_invariance_is_bitwise(self):
        ds = _teacher(3, 2, 5, 1, seed=13)
        shape = NetworkShape((5, 6, 1), beta=1.0)
        a = mean_kernel(ds, shape, 400, seed=6, workers=1)
        b = mean_kernel(ds, shape, 400, seed=6, workers=4)
        np.testing.assert_array_equal(a.kernel, b.kernel)
        np.testing.assert_array_equal(a.se, b.se)


class TestZtMeanKernel:
    def test_zero_targets_shrink_gram(self):
        rng = np.random.default_rng(14)
        x = rng.normal(size=(3, 6))
        ds = Dataset(X=x, Y=np.zeros((3, 1)), Xhat=rng.normal(size=(2, 6)))
        n1 = 9
        shape = NetworkShape((6, n1, 1), beta=np.inf)
        moments = zt_scale_moments(ds, shape, 20_000, seed=0)
        est = zt_mean_kernel(ds, shape, moments)
        grams = build_gram_set(ds)
        np.testing.assert_allclose(est.kernel, (1 - 1 / n1) * grams.gxx,
                                   atol=1e-12)

    def test_scalar_matches_gig_quadrature(self):
        ds = _teacher(3, 2, 8, 1, seed=15)
        n1 = 12
        shape = NetworkShape((8, n1, 1), beta=np.inf)
        moments = zt_scale_moments(ds, shape, 100_000, seed=1)
        est = zt_mean_kernel(ds, shape, moments)
        from lbnn.zero_temp import mgig_params_from_data
        params = mgig_params_from_data(ds, shape)
        _, mi = gig_moments_quadrature(params.nu, float(params.a[0, 0]),
                                       float(params.b[0, 0]))
        grams = build_gram_set(ds)
        ref = (1 - 1 / n1) * grams.gxx + mi * np.outer(ds.Y[:, 0], ds.Y[:, 0]) / n1
        z = np.abs(est.kernel - ref) / np.maximum(est.se, 1e-12)
        assert z.max() <= 3.0

    def test_width_decay_slope(self):
        # ||K - gxx|| decays like 1/n1: fitted log-log slope in [-1.2, -0.8]
        ds = _teacher(3, 2, 8, 1, seed=16)
        grams = build_gram_set(ds)
        widths = (64, 256, 1024)
        gaps = []
        for n1 in widths:
            shape = NetworkShape((8, n1, 1), beta=np.inf)
            moments = zt_scale_moments(ds, shape, 200_000, seed=n1)
            est = zt_mean_kernel(ds, shape, moments)
            gaps.append(np.linalg.norm(est.kernel - grams.gxx))
        slope = np.polyfit(np.log(widths), np.log(gaps), 1)[0]
        assert -1.2 <= slope <= -0.8

    def test_dimension_mismatch_rejected(self):
        ds = _teacher(3, 2, 8, 1, seed=17)
        shape = NetworkShape((8, 12, 1), beta=np.inf)
        bad = ScaleMoments(mean_L=np.eye(2), mean_Linv=np.eye(2),
                           se_L=np.zeros((2, 2)), se_Linv=np.zeros((2, 2)))
        with pytest.raises(ValueError, match="dimension"):
            zt_mean_kernel(ds, shape, bad)
