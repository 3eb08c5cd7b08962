"""Structured linear algebra: Kronecker identities and matrix square roots."""

import numpy as np
import pytest

from lbnn.linalg import (kron, psd_clamp, psd_sqrt, require_well_conditioned,
                         similarity_sqrt, symmetrize, vec)


class TestKron:
    def test_identity_blocks(self):
        np.testing.assert_array_equal(kron(np.eye(2), np.eye(3)), np.eye(6))

    def test_scalar_factor(self):
        b = np.arange(6.0).reshape(2, 3)
        np.testing.assert_array_equal(kron(np.array([[2.0]]), b), 2.0 * b)

    def test_rowmajor_vec_identity(self):
        # vec(A B C) = (A kron C^T) vec(B) under row-major vectorization
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.normal(size=(2, 3))
            b = rng.normal(size=(3, 3))
            c = rng.normal(size=(3, 2))
            direct = vec(a @ b @ c)
            via_kron = kron(a, c.T) @ vec(b)
            np.testing.assert_allclose(via_kron, direct, atol=1e-12)

    def test_mixed_product_rule(self):
        rng = np.random.default_rng(1)
        a, c = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        b, d = rng.normal(size=(2, 3)), rng.normal(size=(3, 5))
        lhs = kron(a, b) @ kron(c, d)
        rhs = kron(a @ c, b @ d)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_bilinearity(self):
        rng = np.random.default_rng(2)
        a, a2 = rng.normal(size=(2, 2)), rng.normal(size=(2, 2))
        b = rng.normal(size=(3, 3))
        np.testing.assert_allclose(
            kron(2.0 * a + a2, b), 2.0 * kron(a, b) + kron(a2, b), atol=1e-12
        )


class TestPsdSqrt:
    def test_identity(self):
        np.testing.assert_array_equal(psd_sqrt(np.eye(4)), np.eye(4))

    def test_scalar_spectrum(self):
        np.testing.assert_allclose(psd_sqrt(4.0 * np.eye(3)), 2.0 * np.eye(3),
                                   atol=1e-14)

    def test_squaring_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            m = rng.normal(size=(5, 5))
            s = m.T @ m
            r = psd_sqrt(s)
            assert np.linalg.norm(r - r.T) <= 1e-12 * np.linalg.norm(r)
            assert np.linalg.norm(r @ r - s) <= 1e-10 * np.linalg.norm(s)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            psd_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError, match="not PSD"):
            psd_sqrt(np.diag([1.0, -0.5]))

    def test_clamps_roundoff_negatives(self):
        s = np.diag([1.0, -1e-12])
        r = psd_sqrt(s)
        assert r[1, 1] == 0.0


class TestSimilaritySqrt:
    def test_identity_pair(self):
        np.testing.assert_allclose(similarity_sqrt(np.eye(3), np.eye(3)),
                                   np.eye(3), atol=1e-14)

    def test_scalar_case(self):
        np.testing.assert_allclose(similarity_sqrt(np.eye(2), 9.0 * np.eye(2)),
                                   3.0 * np.eye(2), atol=1e-13)

    def test_squaring_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            m = rng.normal(size=(4, 6))
            g = symmetrize(m @ m.T / 6 + 0.2 * np.eye(4))
            h = rng.normal(size=(4, 4))
            h = symmetrize(h @ h.T)
            r = similarity_sqrt(g, h)
            target = np.linalg.solve(g, h)
            err = np.linalg.norm(r @ r - target)
            assert err <= 1e-9 * max(1.0, np.linalg.norm(target))

    def test_commutes_with_target(self):
        rng = np.random.default_rng(5)
        m = rng.normal(size=(5, 8))
        g = symmetrize(m @ m.T / 8 + 0.1 * np.eye(5))
        h = rng.normal(size=(5, 5))
        h = symmetrize(h @ h.T)
        r = similarity_sqrt(g, h)
        target = np.linalg.solve(g, h)
        comm = np.linalg.norm(r @ target - target @ r)
        assert comm <= 1e-9 * max(1.0, np.linalg.norm(target))

    def test_rejects_ill_conditioned_base(self):
        g = np.diag([1.0, 1e-15])
        with pytest.raises(ValueError, match="singular"):
            similarity_sqrt(g, np.eye(2))


class TestGuards:
    def test_condition_cap(self):
        with pytest.raises(ValueError, match="condition number"):
            require_well_conditioned(np.diag([1.0, 1e-14]))

    def test_psd_clamp_zeroes_small_band(self):
        s = np.diag([1.0, 1e-14, -1e-14])
        out = psd_clamp(s, clamp_tol=1e-12, error_tol=1e-8)
        np.testing.assert_array_equal(np.linalg.eigvalsh(out) > 0, [False, False, True])

    def test_psd_clamp_rejects_large_negative(self):
        with pytest.raises(ValueError, match="not a round-off"):
            psd_clamp(np.diag([1.0, -0.1]), clamp_tol=0.0, error_tol=1e-8)
