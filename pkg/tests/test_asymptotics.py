"""Closed-form regime kernels, Riccati solvers, and cross-regime checks."""

import numpy as np
import pytest

from lbnn.asymptotics import (RegimeRatios, care_li_sompolinsky,
                              kernel_aitchison, kernel_large_p,
                              kernel_li_sompolinsky, kernel_wide)
from lbnn.linalg import similarity_sqrt, symmetrize
from lbnn.model import Dataset, GramSet, build_gram_set
from lbnn.zero_temp import sample_gig


def _teacher(p, phat, n0, nd, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(p, n0))
    w = rng.normal(size=(n0, nd))
    return Dataset(X=x, Y=x @ w / np.sqrt(n0), Xhat=rng.normal(size=(phat, n0)))


def _random_grams(p, seed, y_cols=2):
    rng = np.random.default_rng(seed)
    mx = rng.normal(size=(p, p + 4))
    my = rng.normal(size=(p, y_cols))
    return GramSet(gxx=symmetrize(mx @ mx.T / (p + 4)),
                   gxxh=np.zeros((p, 1)), gxhxh=np.eye(1),
                   gyy=symmetrize(my @ my.T / y_cols))


class TestRegimeRatios:
    def test_bounds(self):
        RegimeRatios(alpha=0.5, gamma=1.0)
        with pytest.raises(ValueError, match="alpha"):
            RegimeRatios(alpha=1.0)
        with pytest.raises(ValueError, match="gamma"):
            RegimeRatios(gamma=1.5)


class TestKernelWide:
    def test_gamma_zero_is_gp_limit(self):
        grams = _random_grams(3, seed=0)
        np.testing.assert_array_equal(kernel_wide(grams, 0.0, 1.0), grams.gxx)

    def test_matched_targets_cancel_at_zero_temperature(self):
        grams = _random_grams(3, seed=1)
        matched = GramSet(gxx=grams.gxx, gxxh=grams.gxxh, gxhxh=grams.gxhxh,
                          gyy=grams.gxx)
        np.testing.assert_allclose(kernel_wide(matched, 0.3, np.inf),
                                   grams.gxx, atol=1e-12)

    def test_scalar_value(self):
        # gxx = 1, gyy = 4, beta -> inf, gamma = 0.1: K = 1 + 0.1 * 3 = 1.3
        grams = GramSet(gxx=np.array([[1.0]]), gxxh=np.zeros((1, 1)),
                        gxhxh=np.eye(1), gyy=np.array([[4.0]]))
        np.testing.assert_allclose(kernel_wide(grams, 0.1, np.inf), [[1.3]],
                                   atol=1e-14)


class TestKernelLargeP:
    def test_scalar_output_form(self):
        ds = _teacher(4, 1, 6, 1, seed=2)
        grams = build_gram_set(ds)
        n1 = 16
        y = ds.Y[:, 0]
        q = float(y @ np.linalg.solve(grams.gxx, y))
        expected = (1 - 1 / n1) * grams.gxx + (ds.p / n1) * np.outer(y, y) / q
        np.testing.assert_allclose(kernel_large_p(grams, ds.Y, n1), expected,
                                   atol=1e-12)

    def test_normalized_saddle(self):
        # Y with Y^T inv(gxx) Y = p I: the correction is Y Y^T / n1
        rng = np.random.default_rng(3)
        p, nd, n1 = 5, 2, 9
        mx = rng.normal(size=(p, p + 3))
        gxx = symmetrize(mx @ mx.T / (p + 3))
        raw = rng.normal(size=(p, nd))
        # orthonormalize in the inv(gxx) inner product, then scale by sqrt(p)
        w, v = np.linalg.eigh(gxx)
        half = (v * np.sqrt(w)) @ v.T
        q_mat, _ = np.linalg.qr(np.linalg.solve(half, raw))
        y = np.sqrt(p) * half @ q_mat
        grams = GramSet(gxx=gxx, gxxh=np.zeros((p, 1)), gxhxh=np.eye(1),
                        gyy=symmetrize(y @ y.T / nd))
        got = kernel_large_p(grams, y, n1)
        expected = (1 - nd / n1) * gxx + y @ y.T / n1
        np.testing.assert_allclose(got, expected, atol=1e-10)

    def test_rank_deficient_rejected(self):
        ds = _teacher(4, 1, 6, 1, seed=4)
        grams = build_gram_set(ds)
        y = np.hstack([ds.Y, ds.Y])  # duplicated column: rank 1
        with pytest.raises(ValueError, match="rank"):
            kernel_large_p(grams, y, 8)

    def test_matches_gig_oracle_in_overparameterized_data_regime(self):
        # p >> n1: the zero-temperature scale law still holds for scalar
        # output (chi > 0 keeps the density proper at negative order), so
        # exact GIG moments give a finite-size reference
        p, n0, n1 = 24, 32, 8
        ds = _teacher(p, 1, n0, 1, seed=5)
        grams = build_gram_set(ds)
        y = ds.Y[:, 0]
        chi = float(y @ np.linalg.solve(grams.gxx, y))
        nu = (n1 - p) / 2.0
        draws = sample_gig(nu, chi, float(n1), seed=6, size=400_000)
        e_inv = float((1.0 / draws).mean())
        k_ref = (1 - 1 / n1) * grams.gxx + e_inv * np.outer(y, y) / n1
        k_lp = kernel_large_p(grams, ds.Y, n1)
        corr_ref = k_ref - (1 - 1 / n1) * grams.gxx
        rel = np.linalg.norm(k_lp - k_ref) / np.linalg.norm(corr_ref)
        assert rel <= 0.10


class TestCareLiSompolinsky:
    def test_zero_targets(self):
        ds = _teacher(3, 1, 5, 2, seed=6)
        grams = build_gram_set(ds)
        alpha = 0.4
        l_star, residual = care_li_sompolinsky(grams, np.zeros((3, 2)), 7, alpha)
        np.testing.assert_allclose(l_star, (1 - alpha) * np.eye(2), atol=1e-13)
        assert residual < 1e-12

    def test_scalar_quadratic_root(self):
        ds = _teacher(3, 1, 5, 1, seed=7)
        grams = build_gram_set(ds)
        n1, alpha = 6, 0.25
        l_star, _ = care_li_sompolinsky(grams, ds.Y, n1, alpha)
        m = float(ds.Y[:, 0] @ np.linalg.solve(grams.gxx, ds.Y[:, 0])) / n1
        ell = float(l_star[0, 0])
        assert abs(ell**2 - (1 - alpha) * ell - m) < 1e-12

    def test_residuals_on_random_instances(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            p, nd = 4, 3
            ds = _teacher(p, 1, p + 3, nd, seed=int(rng.integers(1e6)))
            grams = build_gram_set(ds)
            alpha = float(rng.uniform(0.0, 0.9))
            _, residual = care_li_sompolinsky(grams, ds.Y, 9, alpha)
            assert residual < 1e-9


class TestKernelLiSompolinsky:
    def test_gamma_zero_recovers_gram(self):
        grams = _random_grams(4, seed=9)
        np.testing.assert_allclose(kernel_li_sompolinsky(grams, 0.3, 0.0),
                                   grams.gxx, atol=1e-12)

    def test_commuting_scalar_case(self):
        g_val, gamma = 2.5, 0.2
        grams = GramSet(gxx=np.eye(3), gxxh=np.zeros((3, 1)), gxhxh=np.eye(1),
                        gyy=g_val * np.eye(3))
        expected = 0.5 * (1 + np.sqrt(1 + 4 * gamma * g_val)) * np.eye(3)
        np.testing.assert_allclose(kernel_li_sompolinsky(grams, 0.0, gamma),
                                   expected, atol=1e-12)

    def test_route_offset_identity_scalar_output(self):
        # closed form equals the scale-route kernel plus exactly gamma * gxx
        rng = np.random.default_rng(10)
        for seed in range(5):
            p, n0, n1 = 4, 7, 11
            ds = _teacher(p, 1, n0, 1, seed=100 + seed)
            grams = build_gram_set(ds)
            alpha = float(rng.uniform(0.0, 0.8))
            gamma = 1.0 / n1
            l_star, _ = care_li_sompolinsky(grams, ds.Y, n1, alpha)
            y = ds.Y[:, 0]
            route = ((1 - gamma) * grams.gxx
                     + np.outer(y, y) / float(l_star[0, 0]) / n1)
            closed = kernel_li_sompolinsky(grams, alpha, gamma)
            np.testing.assert_allclose(closed, route + gamma * grams.gxx,
                                       atol=1e-9)

    def test_leading_order_form(self):
        grams = _random_grams(3, seed=11)
        alpha, gamma = 0.3, 0.05
        expected = (1 - gamma) * grams.gxx + gamma / (1 - alpha) * grams.gyy
        np.testing.assert_allclose(
            kernel_li_sompolinsky(grams, alpha, gamma, leading_order=True),
            expected, atol=1e-14)


class TestKernelAitchison:
    def test_gamma_one_scalar_root(self):
        grams = GramSet(gxx=np.eye(3), gxxh=np.zeros((3, 1)), gxhxh=np.eye(1),
                        gyy=4.0 * np.eye(3))
        kernel, residual = kernel_aitchison(grams, 1.0)
        np.testing.assert_allclose(kernel, 2.0 * np.eye(3), atol=1e-12)
        assert residual < 1e-12

    def test_small_gamma_recovers_gram(self):
        grams = _random_grams(4, seed=12)
        kernel, _ = kernel_aitchison(grams, 1e-9)
        np.testing.assert_allclose(kernel, grams.gxx, atol=1e-6)

    def test_gamma_one_symmetric_square_root_identity(self):
        # K = gxx (inv(gxx) gyy)^{1/2} and K = (gyy inv(gxx))^{1/2} gxx;
        # the second expression is exactly the transpose of the first
        for seed in range(5):
            grams = _random_grams(4, seed=200 + seed, y_cols=6)
            kernel, _ = kernel_aitchison(grams, 1.0)
            left = grams.gxx @ similarity_sqrt(grams.gxx, grams.gyy)
            np.testing.assert_allclose(kernel, left, atol=1e-9)
            np.testing.assert_allclose(kernel, left.T, atol=1e-9)

    def test_residuals_on_random_instances(self):
        rng = np.random.default_rng(14)
        for _ in range(20):
            grams = _random_grams(4, seed=int(rng.integers(1e6)), y_cols=6)
            gamma = float(rng.uniform(0.05, 1.0))
            _, residual = kernel_aitchison(grams, gamma)
            assert residual < 1e-8 * max(1.0, np.linalg.norm(grams.gyy))

    def test_gamma_domain(self):
        grams = _random_grams(3, seed=15)
        with pytest.raises(ValueError, match="gamma"):
            kernel_aitchison(grams, 0.0)


class TestRegimeConsistency:
    def test_leading_order_difference_is_second_order(self):
        # at alpha = 0 the two regimes agree to O(gamma); the gap shrinks
        # like gamma^2 (log-log slope >= 1.8). Target Grams much larger
        # than the input Gram push cubic terms into this gamma window,
        # so the instance keeps them comparable.
        rng = np.random.default_rng(16)
        p = 4
        mx = rng.normal(size=(p, p + 4))
        my = 0.5 * rng.normal(size=(p, 6))
        grams = GramSet(gxx=symmetrize(mx @ mx.T / (p + 4)),
                        gxxh=np.zeros((p, 1)), gxhxh=np.eye(1),
                        gyy=symmetrize(my @ my.T / 6))
        gammas = (0.02, 0.04, 0.08)
        diffs = []
        for gamma in gammas:
            ls = kernel_li_sompolinsky(grams, 0.0, gamma, leading_order=True)
            ait, _ = kernel_aitchison(grams, gamma)
            diffs.append(np.linalg.norm(ls - ait))
        slope = np.polyfit(np.log(gammas), np.log(diffs), 1)[0]
        assert slope >= 1.8
