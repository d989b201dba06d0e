"""Trace-norm complexity measures, plain and distribution-weighted.

Every measure accepts either a dense matrix or a :class:`~wtnorm.linalg.FactorPair`;
factored inputs are handled without forming the ``n x m`` product.

The partially weighted trace norm of ``X`` under row/column marginals
``p``, ``q`` and exponent ``alpha`` is the trace norm of
``diag(p**(alpha/2)) @ X @ diag(q**(alpha/2))``.  ``alpha = 0`` is the plain
trace norm and ``alpha = 1`` the fully weighted one.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .linalg import FactorPair, as_matrix, singular_values, singular_values_factored

_SUM_TOL = 1e-10


@dataclass(frozen=True)
class Marginals:
    """Row probabilities ``p`` (length n) and column probabilities ``q`` (length m)."""

    p: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        q = np.asarray(self.q, dtype=np.float64)
        for name, v in (("p", p), ("q", q)):
            if v.ndim != 1 or v.size == 0:
                raise InvalidInputError(f"{name} must be a non-empty vector")
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise InvalidInputError(f"{name} has negative or non-finite entries")
            if abs(v.sum() - 1.0) > _SUM_TOL:
                raise InvalidInputError(f"{name} sums to {v.sum()!r}, not 1")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)

    @classmethod
    def uniform(cls, n, m):
        return cls(np.full(n, 1.0 / n), np.full(m, 1.0 / m))

    @property
    def shape(self):
        return (self.p.size, self.q.size)


@dataclass(frozen=True)
class ComplexityReport:
    trace_norm: float
    tc: float
    tc_pq: float
    tc_pq_alpha: float
    weighted_trace_norm: float
    alpha: float

    def to_dict(self):
        return asdict(self)


def _shape(X):
    return X.shape if isinstance(X, FactorPair) else as_matrix(X).shape


def _spectrum(X):
    if isinstance(X, FactorPair):
        return singular_values_factored(X)
    return singular_values(X)


def _scaled(X, row_scale, col_scale):
    if isinstance(X, FactorPair):
        return FactorPair(X.U * row_scale[None, :], X.V * col_scale[None, :])
    return row_scale[:, None] * as_matrix(X) * col_scale[None, :]


def _check(X, w, alpha):
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"alpha must lie in [0, 1], got {alpha}")
    if w.shape != tuple(_shape(X)):
        raise InvalidInputError(
            f"marginals of shape {w.shape} do not match matrix {_shape(X)}")


def trace_norm(X) -> float:
    """Sum of singular values."""
    return float(np.sum(_spectrum(X)))


def tc(X) -> float:
    """Squared trace norm divided by ``n * m``; equals the rank for orthogonal unit-variance matrices."""
    n, m = _shape(X)
    return trace_norm(X) ** 2 / (n * m)


def weighted_trace_norm(X, w: Marginals, alpha: float = 1.0) -> float:
    """Trace norm of ``diag(p**(alpha/2)) X diag(q**(alpha/2))``.

    Rows and columns with zero marginal are zeroed by the scaling, except at
    ``alpha = 0`` where ``0**0 = 1`` leaves the matrix untouched.
    """
    _check(X, w, alpha)
    return trace_norm(_scaled(X, np.power(w.p, alpha / 2), np.power(w.q, alpha / 2)))


def effective_marginals(w: Marginals, alpha: float):
    """Row/column weights ``p**alpha / n**(1-alpha)`` and ``q**alpha / m**(1-alpha)``."""
    n, m = w.shape
    return (np.power(w.p, alpha) / n ** (1.0 - alpha),
            np.power(w.q, alpha) / m ** (1.0 - alpha))


def tc_pq(X, w: Marginals, alpha: float = 1.0) -> float:
    """Normalized weighted complexity.

    At ``alpha = 1`` this is the squared weighted trace norm; in general the
    squared trace norm under the effective marginals from
    :func:`effective_marginals`, so that ``alpha = 0`` gives :func:`tc` and a
    uniform ``w`` gives :func:`tc` for every ``alpha``.
    """
    _check(X, w, alpha)
    pe, qe = effective_marginals(w, alpha)
    return trace_norm(_scaled(X, np.sqrt(pe), np.sqrt(qe))) ** 2


def factored_weighted_penalty(F: FactorPair, w: Marginals, alpha: float = 1.0) -> float:
    """``0.5 * (sum_i p_i**alpha |U_i|^2 + sum_j q_j**alpha |V_j|^2)``.

    An upper bound on ``weighted_trace_norm(reconstruct(F), w, alpha)``,
    tight for a balanced factorization taken from the SVD of the scaled matrix.
    """
    _check(F, w, alpha)
    ru = np.sum(F.U ** 2, axis=0)
    rv = np.sum(F.V ** 2, axis=0)
    return 0.5 * float(np.dot(np.power(w.p, alpha), ru) + np.dot(np.power(w.q, alpha), rv))


def balanced_factors(X, w: Marginals, alpha: float = 1.0) -> FactorPair:
    """Factorization of dense ``X`` attaining the weighted trace norm in :func:`factored_weighted_penalty`.

    Requires strictly positive marginals when ``alpha > 0``.
    """
    _check(X, w, alpha)
    a = np.power(w.p, alpha / 2)
    b = np.power(w.q, alpha / 2)
    if np.any(a == 0) or np.any(b == 0):
        raise InvalidInputError("balanced factors need strictly positive marginals")
    L, s, Rt = np.linalg.svd(_scaled(X, a, b), full_matrices=False)
    root = np.sqrt(s)
    U = (root[:, None] * L.T) / a[None, :]
    V = (root[:, None] * Rt) / b[None, :]
    return FactorPair(U, V)


def complexity_report(X, w: Marginals | None = None, alpha: float = 1.0) -> ComplexityReport:
    """Collect trace norm, tc, tc_pq (alpha=1), tc_pq and the weighted trace norm at ``alpha``."""
    if w is None:
        w = Marginals.uniform(*_shape(X))
    tn = trace_norm(X)
    n, m = _shape(X)
    return ComplexityReport(
        trace_norm=tn,
        tc=tn ** 2 / (n * m),
        tc_pq=tc_pq(X, w, 1.0),
        tc_pq_alpha=tc_pq(X, w, alpha),
        weighted_trace_norm=weighted_trace_norm(X, w, alpha),
        alpha=float(alpha),
    )
