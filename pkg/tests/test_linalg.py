import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wtnorm.errors import InvalidInputError
from wtnorm.linalg import (FactorPair, frobenius_norm, mask, numerical_rank, reconstruct,
                           singular_values, singular_values_factored)
from wtnorm.synth import ObservationSet


def eig_oracle(M):
    """Singular values as square roots of the eigenvalues of the Gram matrix."""
    M = np.asarray(M, dtype=float)
    G = M.T @ M if M.shape[0] >= M.shape[1] else M @ M.T
    ev = np.clip(np.linalg.eigvalsh(G), 0, None)
    return np.sqrt(np.sort(ev)[::-1])


class TestSingularValues:
    def test_diagonal(self):
        np.testing.assert_allclose(singular_values(np.diag([3.0, 4.0])), [4.0, 3.0])

    def test_all_ones(self):
        s = singular_values([[1.0, 1.0], [1.0, 1.0]])
        np.testing.assert_allclose(s, eig_oracle([[1, 1], [1, 1]]), atol=1e-12)
        np.testing.assert_allclose(s, [2.0, 0.0], atol=1e-12)

    def test_identity(self):
        np.testing.assert_allclose(singular_values(np.eye(5)), np.ones(5))

    def test_negative_diagonal_sorted(self):
        np.testing.assert_allclose(singular_values(np.diag([-1.0, 5.0, 2.0])), [5, 2, 1])

    @pytest.mark.parametrize("shape", [(7, 3), (3, 7), (20, 20)])
    def test_against_gram_oracle(self, rng, shape):
        M = rng.normal(size=shape)
        s = singular_values(M)
        assert s.shape == (min(shape),)
        np.testing.assert_allclose(s, eig_oracle(M), rtol=1e-9)
        assert abs(np.sum(s ** 2) - np.sum(M ** 2)) <= 1e-8 * np.sum(M ** 2)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            singular_values([[1.0, np.nan]])
        with pytest.raises(InvalidInputError):
            singular_values([[np.inf]])

    def test_large_matrix_is_fast(self, rng):
        M = rng.normal(size=(2000, 2000))
        t = time.perf_counter()
        s = singular_values(M)
        assert time.perf_counter() - t < 60
        assert s.shape == (2000,)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 12), st.floats(-50, 50), st.integers(0, 2**31))
    def test_scaling(self, n, m, c, seed):
        M = np.random.default_rng(seed).normal(size=(n, m))
        s = singular_values(M)
        np.testing.assert_allclose(singular_values(c * M), abs(c) * s, rtol=1e-10, atol=1e-300)


class TestFactored:
    def test_identity_times_diag(self):
        F = FactorPair(np.eye(2), np.diag([3.0, 4.0]))
        np.testing.assert_allclose(singular_values_factored(F), [4.0, 3.0])

    def test_zero_v(self, rng):
        F = FactorPair(rng.normal(size=(3, 5)), np.zeros((3, 4)))
        np.testing.assert_array_equal(singular_values_factored(F), np.zeros(4))

    def test_matches_dense(self, rng):
        F = FactorPair(rng.normal(size=(3, 20)), rng.normal(size=(3, 30)))
        dense = singular_values(reconstruct(F))
        np.testing.assert_allclose(singular_values_factored(F), dense, rtol=1e-8, atol=1e-8 * dense[0])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 50), st.integers(1, 80), st.integers(1, 10), st.integers(0, 2**31))
    def test_matches_dense_property(self, n, m, k, seed):
        r = np.random.default_rng(seed)
        F = FactorPair(r.normal(size=(k, n)), r.normal(size=(k, m)))
        dense = singular_values(reconstruct(F))
        fact = singular_values_factored(F)
        np.testing.assert_allclose(fact, dense, rtol=1e-8, atol=1e-8 * max(dense[0], 1e-300))

    def test_k_larger_than_dims(self, rng):
        F = FactorPair(rng.normal(size=(8, 3)), rng.normal(size=(8, 5)))
        np.testing.assert_allclose(singular_values_factored(F), singular_values(reconstruct(F)),
                                   rtol=1e-9)


class TestReconstruct:
    def test_zero(self):
        np.testing.assert_array_equal(reconstruct(FactorPair(np.zeros((2, 3)), np.zeros((2, 4)))),
                                      np.zeros((3, 4)))

    def test_outer_product(self):
        X = reconstruct(FactorPair([[1.0, 2.0]], [[3.0, 4.0, 5.0]]))
        np.testing.assert_array_equal(X, [[3, 4, 5], [6, 8, 10]])

    def test_scalar_loop_oracle(self, rng):
        F = FactorPair(rng.normal(size=(4, 6)), rng.normal(size=(4, 5)))
        X = reconstruct(F)
        for i in range(6):
            for j in range(5):
                ref = sum(F.U[l, i] * F.V[l, j] for l in range(4))
                assert X[i, j] == pytest.approx(ref, rel=1e-12, abs=1e-12)

    def test_mismatched_k(self):
        with pytest.raises(InvalidInputError):
            FactorPair(np.zeros((2, 3)), np.zeros((3, 3)))


class TestMask:
    M = np.array([[1.0, 2.0], [3.0, 4.0]])

    def _obs(self, pairs):
        rows = [p[0] for p in pairs]
        cols = [p[1] for p in pairs]
        return ObservationSet(rows, cols, np.zeros(len(pairs)), 2, 2)

    def test_all(self):
        np.testing.assert_array_equal(mask(self.M, self._obs([(0, 0), (0, 1), (1, 0), (1, 1)])), self.M)

    def test_empty(self):
        np.testing.assert_array_equal(mask(self.M, self._obs([])), np.zeros((2, 2)))

    def test_single(self):
        np.testing.assert_array_equal(mask(self.M, self._obs([(0, 1)])), [[0, 2], [0, 0]])

    def test_repeats_keep_single_value(self):
        np.testing.assert_array_equal(mask(self.M, self._obs([(1, 1)] * 3)), [[0, 0], [0, 4]])

    def test_out_of_range(self):
        class Fake:
            rows = np.array([2])
            cols = np.array([0])
        with pytest.raises(InvalidInputError):
            mask(self.M, Fake())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 60), st.integers(1, 80), st.integers(1, 8), st.integers(0, 2**31))
def test_norm_chain(n, m, r, seed):
    rng = np.random.default_rng(seed)
    r = min(r, n, m)
    M = rng.normal(size=(n, r)) @ rng.normal(size=(r, m))
    s = singular_values(M)
    fro = frobenius_norm(M)
    tn = s.sum()
    rank = numerical_rank(s)
    assert fro <= tn * (1 + 1e-8)
    assert tn <= np.sqrt(rank) * fro * (1 + 1e-8)
    assert np.sqrt(rank) * fro <= min(n, m) * fro * (1 + 1e-12)
