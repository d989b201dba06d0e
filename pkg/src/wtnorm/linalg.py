"""Dense and factored matrix primitives.

Dense matrices are plain ``float64`` numpy arrays of shape ``(n, m)``.  A
factored matrix is a :class:`FactorPair` holding ``U`` (``k x n``) and ``V``
(``k x m``) with ``X = U.T @ V``, so column ``i`` of ``U`` is the latent
vector of row ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

#: Singular values below ``RANK_TOL * sigma_max`` count as zero.
RANK_TOL = 1e-9
_CLAMP_TOL = 1e-12


def as_matrix(M, name="matrix"):
    """Validate and return ``M`` as a finite 2-D float64 array."""
    A = np.asarray(M, dtype=np.float64)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < 1 or A.shape[1] < 1:
        raise InvalidInputError(f"{name} must have at least one row and column")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


@dataclass(frozen=True)
class FactorPair:
    """Factorization ``X = U.T @ V`` with ``U`` k x n and ``V`` k x m."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        U = np.asarray(self.U, dtype=np.float64)
        V = np.asarray(self.V, dtype=np.float64)
        if U.ndim != 2 or V.ndim != 2:
            raise InvalidInputError("factors must be 2-D")
        if U.shape[0] != V.shape[0]:
            raise InvalidInputError(
                f"inner dimensions differ: U is {U.shape}, V is {V.shape}")
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "V", V)

    @property
    def k(self):
        return self.U.shape[0]

    @property
    def n(self):
        return self.U.shape[1]

    @property
    def m(self):
        return self.V.shape[1]

    @property
    def shape(self):
        return (self.n, self.m)


def reconstruct(F: FactorPair) -> np.ndarray:
    """Form the dense ``n x m`` product ``U.T @ V``."""
    return F.U.T @ F.V


def _clamp(s):
    s = np.sort(np.abs(s))[::-1]
    if s.size and s[0] > 0:
        s[s < _CLAMP_TOL * s[0]] = 0.0
    return s


def singular_values(M) -> np.ndarray:
    """Singular values of a dense matrix, nonincreasing, length ``min(n, m)``."""
    A = as_matrix(M)
    return _clamp(np.linalg.svd(A, compute_uv=False))


def singular_values_factored(F: FactorPair) -> np.ndarray:
    """Singular values of ``U.T @ V`` without forming the product.

    Both factors are orthonormalized by thin QR, ``U.T = Qu Ru`` and
    ``V.T = Qv Rv``, so ``X = Qu (Ru Rv.T) Qv.T`` and the spectrum of ``X``
    is that of the ``k x k`` core ``Ru Rv.T``.  The result is zero-padded to
    ``min(n, m)``.
    """
    if not (np.all(np.isfinite(F.U)) and np.all(np.isfinite(F.V))):
        raise InvalidInputError("factors have non-finite entries")
    size = min(F.n, F.m)
    out = np.zeros(size)
    if F.k == 0:
        return out
    Ru = np.linalg.qr(F.U.T, mode="r")
    Rv = np.linalg.qr(F.V.T, mode="r")
    s = np.linalg.svd(Ru @ Rv.T, compute_uv=False)
    s = s[:size]
    out[: s.size] = s
    return _clamp(out)


def numerical_rank(s: np.ndarray) -> int:
    """Count singular values above ``RANK_TOL`` times the largest."""
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.count_nonzero(s > RANK_TOL * s[0]))


def frobenius_norm(M) -> float:
    return float(np.linalg.norm(as_matrix(M)))


def mask(M, S) -> np.ndarray:
    """Zero ``M`` outside the index set of ``S``.

    Repeated indices in ``S`` still keep the single value ``M[i, j]``.
    """
    A = as_matrix(M)
    rows = np.asarray(S.rows, dtype=np.int64)
    cols = np.asarray(S.cols, dtype=np.int64)
    n, m = A.shape
    if rows.size and (rows.min() < 0 or rows.max() >= n
                      or cols.min() < 0 or cols.max() >= m):
        raise InvalidInputError("observation index outside matrix bounds")
    out = np.zeros_like(A)
    out[rows, cols] = A[rows, cols]
    return out
