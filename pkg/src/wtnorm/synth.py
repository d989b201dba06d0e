"""Synthetic targets, sampling distributions and noisy observation samples.

All randomness goes through :func:`numpy.random.default_rng` (PCG64), seeded
with plain integers, so a seed fixes the output on every platform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .linalg import FactorPair, as_matrix, reconstruct
from .norms import Marginals

UNIFORM = "uniform"
TWO_BLOCK = "two-block"
PRODUCT = "empirical-product"


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Multiset of ``(row, col, value)`` triplets on an ``n x m`` grid."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    n: int
    m: int

    def __post_init__(self):
        rows = np.ascontiguousarray(self.rows, dtype=np.int64)
        cols = np.ascontiguousarray(self.cols, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if not (rows.ndim == cols.ndim == values.ndim == 1):
            raise InvalidInputError("rows, cols and values must be 1-D")
        if not (rows.size == cols.size == values.size):
            raise InvalidInputError("rows, cols and values differ in length")
        if self.n < 1 or self.m < 1:
            raise InvalidInputError("grid dimensions must be positive")
        if rows.size:
            if rows.min() < 0 or rows.max() >= self.n:
                raise InvalidInputError("row index out of range")
            if cols.min() < 0 or cols.max() >= self.m:
                raise InvalidInputError("column index out of range")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("observation values must be finite")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", int(self.m))

    def __len__(self):
        return self.values.size

    @property
    def shape(self):
        return (self.n, self.m)

    def row_counts(self):
        return np.bincount(self.rows, minlength=self.n)

    def col_counts(self):
        return np.bincount(self.cols, minlength=self.m)

    def take(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return ObservationSet(self.rows[idx], self.cols[idx], self.values[idx], self.n, self.m)

    def equals(self, other):
        """Exact equality of grid, order and bit patterns of values."""
        return (self.shape == other.shape
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.cols, other.cols)
                and np.array_equal(self.values.view(np.int64), other.values.view(np.int64)))


@dataclass(frozen=True)
class SamplingDistribution:
    """Distribution over index pairs of an ``n x m`` grid.

    ``kind`` is ``"uniform"``, ``"two-block"`` (block A on indices
    ``[0, n_A)``, block B on ``[n_A, n_A + n_B)``, half the mass each) or
    ``"empirical-product"`` (``P(i, j) = p_i q_j``).
    """

    kind: str
    n: int
    m: int
    n_A: int = 0
    n_B: int = 0
    marginals: Marginals | None = field(default=None, repr=False)

    @property
    def shape(self):
        return (self.n, self.m)

    def block_slices(self):
        """Index ranges of blocks A and B (two-block only)."""
        if self.kind != TWO_BLOCK:
            raise InvalidInputError("block_slices needs a two-block distribution")
        return slice(0, self.n_A), slice(self.n_A, self.n_A + self.n_B)

    def pair_probabilities(self) -> np.ndarray:
        """Dense ``n x m`` probability table; meant for small grids."""
        if self.kind == UNIFORM:
            return np.full((self.n, self.m), 1.0 / (self.n * self.m))
        if self.kind == TWO_BLOCK:
            P = np.zeros((self.n, self.m))
            a, b = self.block_slices()
            P[a, a] = 0.5 / self.n_A ** 2
            P[b, b] = 0.5 / self.n_B ** 2
            return P
        return np.outer(self.marginals.p, self.marginals.q)

    def sample_indices(self, count, rng):
        """Draw ``count`` i.i.d. index pairs."""
        if self.kind == UNIFORM:
            return rng.integers(0, self.n, count), rng.integers(0, self.m, count)
        if self.kind == TWO_BLOCK:
            in_a = rng.random(count) < 0.5
            ra = rng.integers(0, self.n_A, count)
            ca = rng.integers(0, self.n_A, count)
            rb = self.n_A + rng.integers(0, self.n_B, count)
            cb = self.n_A + rng.integers(0, self.n_B, count)
            return np.where(in_a, ra, rb), np.where(in_a, ca, cb)
        return (_draw(self.marginals.p, count, rng), _draw(self.marginals.q, count, rng))


def _draw(p, count, rng):
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return np.minimum(idx, p.size - 1)


def uniform_distribution(n, m) -> SamplingDistribution:
    if n < 1 or m < 1:
        raise InvalidInputError("grid dimensions must be positive")
    return SamplingDistribution(UNIFORM, int(n), int(m))


def two_block_distribution(n_A, n_B, n=None, m=None) -> SamplingDistribution:
    """Half the mass uniform on block A, half uniform on the disjoint block B.

    The grid defaults to ``(n_A + n_B) x (n_A + n_B)``; a larger grid leaves
    the remaining rows and columns with zero probability.
    """
    n = n_A + n_B if n is None else n
    m = n_A + n_B if m is None else m
    if n_A < 1 or n_B < 1:
        raise InvalidInputError("block sizes must be positive")
    if n_A + n_B > min(n, m):
        raise InvalidInputError(
            f"blocks of size {n_A} and {n_B} overlap or exceed the {n}x{m} grid")
    return SamplingDistribution(TWO_BLOCK, int(n), int(m), int(n_A), int(n_B))


def product_distribution(w: Marginals) -> SamplingDistribution:
    n, m = w.shape
    return SamplingDistribution(PRODUCT, n, m, marginals=w)


def powerlaw_marginals(n, m, exponent) -> Marginals:
    """Marginals proportional to ``rank ** -exponent`` (1-based rank) on rows and columns."""
    p = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    q = np.arange(1, m + 1, dtype=np.float64) ** -exponent
    return Marginals(p / p.sum(), q / q.sum())


def marginals_of(D: SamplingDistribution) -> Marginals:
    """Exact row and column marginals of ``D``."""
    if D.kind == UNIFORM:
        return Marginals.uniform(D.n, D.m)
    if D.kind == TWO_BLOCK:
        p = np.zeros(D.n)
        q = np.zeros(D.m)
        a, b = D.block_slices()
        p[a] = q[a] = 0.5 / D.n_A
        p[b] = q[b] = 0.5 / D.n_B
        return Marginals(p, q)
    return D.marginals


def gen_orthogonal_factors(n, m, k, seed) -> FactorPair:
    """I.i.d. Gaussian factors with variance ``1/sqrt(k)``, giving unit-variance products."""
    if k < 1:
        raise InvalidInputError("rank k must be at least 1")
    if k > min(n, m):
        raise InvalidInputError(f"rank {k} exceeds min({n}, {m})")
    rng = np.random.default_rng(seed)
    sd = k ** -0.25
    U = rng.normal(0.0, sd, (k, n))
    V = rng.normal(0.0, sd, (k, m))
    return FactorPair(U, V)


def gen_orthogonal_lowrank(n, m, k, seed):
    """Random "orthogonal" rank-``k`` target; returns ``(Y, factors)``."""
    F = gen_orthogonal_factors(n, m, k, seed)
    return reconstruct(F), F


def target_values(Y, rows, cols):
    """Entries ``Y[rows, cols]`` of a dense matrix or a factor pair."""
    if isinstance(Y, FactorPair):
        return np.einsum("ks,ks->s", Y.U[:, rows], Y.V[:, cols])
    return as_matrix(Y, "target")[rows, cols]


def sample_observations(Y, D: SamplingDistribution, count, noise_sd, seed) -> ObservationSet:
    """``count`` i.i.d. draws from ``D`` with fresh Gaussian noise on every draw.

    ``Y`` may be dense or a :class:`FactorPair`.
    """
    shape = Y.shape
    if tuple(shape) != D.shape:
        raise InvalidInputError(f"target shape {tuple(shape)} does not match distribution {D.shape}")
    if noise_sd < 0:
        raise InvalidInputError("noise_sd must be non-negative")
    if count < 0:
        raise InvalidInputError("count must be non-negative")
    if D.kind == PRODUCT and (D.marginals.p.sum() <= 0 or D.marginals.q.sum() <= 0):
        raise InvalidInputError("distribution has zero total mass")
    rng = np.random.default_rng(seed)
    rows, cols = D.sample_indices(count, rng)
    noise = rng.normal(0.0, 1.0, count) * noise_sd
    values = target_values(Y, rows, cols) + noise
    return ObservationSet(rows, cols, values, D.n, D.m)


def gen_longtail_dataset(n_users=2000, n_items=1000, count=200_000, rank=10,
                         exponent=0.8, noise_sd=1.0, seed=0):
    """Rank-``rank`` ratings sampled under power-law user and item marginals.

    ``exponent = 0`` gives uniform sampling.  Returns ``(observations, truth)``.
    """
    ss = np.random.SeedSequence(seed)
    factor_seed, sample_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    F = gen_orthogonal_factors(n_users, n_items, rank, factor_seed)
    D = product_distribution(powerlaw_marginals(n_users, n_items, exponent))
    return sample_observations(F, D, count, noise_sd, sample_seed), F
