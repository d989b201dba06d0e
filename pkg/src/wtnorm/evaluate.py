"""Distribution-weighted error measures and held-out RMSE.

Matrices passed here may be dense arrays, :class:`FactorPair` objects or
trained :class:`FactorModel` objects.  When both operands are factored, block
errors are computed from small Gram matrices and the ``n x m`` products are
never formed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .linalg import FactorPair, as_matrix
from .synth import PRODUCT, TWO_BLOCK, UNIFORM, SamplingDistribution, target_values
from .train import FactorModel

MC_DRAWS = 1_000_000


@dataclass
class EvalReport:
    weighted_mse: float
    excess_error: float | None = None
    rmse: float | None = None
    mse_A: float | None = None
    mse_B: float | None = None
    stderr: float | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def csv_header(self):
        return list(self.to_dict())

    def csv_row(self):
        return ["" if v is None else repr(float(v)) for v in self.to_dict().values()]


def _operand(X):
    if isinstance(X, FactorModel):
        return X.full_factors()
    if isinstance(X, FactorPair):
        return X
    return as_matrix(X)


def _shape(X):
    return X.shape


def _block(X, rs, cs):
    if isinstance(X, FactorPair):
        return X.U[:, rs].T @ X.V[:, cs]
    return X[rs, cs]


def _block_sq_error_sum(X, Y, rs, cs):
    """``sum over the block of (X - Y)^2``."""
    if isinstance(X, FactorPair) and isinstance(Y, FactorPair):
        A, B = X.U[:, rs], X.V[:, cs]
        C, D = Y.U[:, rs], Y.V[:, cs]
        xx = np.sum((A @ A.T) * (B @ B.T))
        yy = np.sum((C @ C.T) * (D @ D.T))
        xy = np.sum((A @ C.T) * (B @ D.T))
        return max(float(xx - 2.0 * xy + yy), 0.0)
    diff = _block(X, rs, cs) - _block(Y, rs, cs)
    return float(np.sum(diff * diff))


def _prepare(X, Y, D):
    X, Y = _operand(X), _operand(Y)
    if tuple(_shape(X)) != tuple(_shape(Y)) or tuple(_shape(X)) != D.shape:
        raise InvalidInputError(
            f"shapes disagree: {tuple(_shape(X))}, {tuple(_shape(Y))}, distribution {D.shape}")
    return X, Y


def block_errors(X, Y, D: SamplingDistribution):
    """Mean squared error over block A and over block B of a two-block distribution."""
    X, Y = _prepare(X, Y, D)
    a, b = D.block_slices()
    mse_a = _block_sq_error_sum(X, Y, a, a) / D.n_A ** 2
    mse_b = _block_sq_error_sum(X, Y, b, b) / D.n_B ** 2
    return mse_a, mse_b


def _values_at(X, rows, cols):
    if isinstance(X, FactorPair):
        return target_values(X, rows, cols)
    return X[rows, cols]


def weighted_mse_mc(X, Y, D: SamplingDistribution, draws=MC_DRAWS, seed=0):
    """Monte-Carlo estimate of ``E_D (X - Y)^2``; returns ``(mean, standard error)``."""
    X, Y = _prepare(X, Y, D)
    rng = np.random.default_rng(seed)
    rows, cols = D.sample_indices(draws, rng)
    sq = (_values_at(X, rows, cols) - _values_at(Y, rows, cols)) ** 2
    return float(sq.mean()), float(sq.std(ddof=1) / np.sqrt(draws)) if draws > 1 else 0.0


def weighted_mse(X, Y, D: SamplingDistribution, draws=MC_DRAWS, seed=0) -> float:
    """``sum_ij D(i,j) (X_ij - Y_ij)^2``.

    Exact for uniform and two-block distributions; Monte-Carlo with ``draws``
    samples for product distributions (see :func:`weighted_mse_mc` for the
    standard error).
    """
    if D.kind == UNIFORM:
        X, Y = _prepare(X, Y, D)
        full = slice(None)
        return _block_sq_error_sum(X, Y, full, full) / (D.n * D.m)
    if D.kind == TWO_BLOCK:
        mse_a, mse_b = block_errors(X, Y, D)
        return 0.5 * mse_a + 0.5 * mse_b
    if D.kind == PRODUCT:
        return weighted_mse_mc(X, Y, D, draws, seed)[0]
    raise InvalidInputError(f"unknown distribution kind {D.kind!r}")


def excess_error(X, X_star, D: SamplingDistribution, **kw) -> float:
    """``|X - X*|_D^2``: weighted error against the noise-free target."""
    return weighted_mse(X, X_star, D, **kw)


def holdout_rmse(model: FactorModel, S_test) -> float:
    """Root mean squared prediction error over the test triplets, repeats counted."""
    if len(S_test) == 0:
        raise InvalidInputError("test set is empty")
    if tuple(S_test.shape) != tuple(model.shape):
        raise InvalidInputError(f"test grid {S_test.shape} does not match model {model.shape}")
    pred = model.predict(S_test.rows, S_test.cols)
    return float(np.sqrt(np.mean((S_test.values - pred) ** 2)))


def evaluate(X, D: SamplingDistribution, X_star=None, Y=None, S_test=None) -> EvalReport:
    """Assemble an :class:`EvalReport`.

    ``weighted_mse`` is measured against ``Y`` when given, else against ``X_star``.
    """
    ref = Y if Y is not None else X_star
    if ref is None:
        raise InvalidInputError("need a target matrix Y or X_star")
    report = EvalReport(weighted_mse=weighted_mse(X, ref, D))
    if D.kind == PRODUCT:
        report.stderr = weighted_mse_mc(X, ref, D)[1]
    if X_star is not None:
        report.excess_error = excess_error(X, X_star, D)
    if D.kind == TWO_BLOCK:
        report.mse_A, report.mse_B = block_errors(X, ref, D)
    if S_test is not None and isinstance(X, FactorModel):
        report.rmse = holdout_rmse(X, S_test)
    return report
