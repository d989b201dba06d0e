"""Truncated weighted trace-norm factorization fitted by SGD.

For an observation multiset ``S`` with row counts ``n_i`` and column counts
``m_j`` the fitted objective is::

    sum_{(i,j) in S} (Y_ij - mu - U_i.V_j)^2
        + lam14 / (2|S|) * (n_i**(alpha-1) |U_i|^2 + m_j**(alpha-1) |V_j|^2)

where ``mu`` is the training mean.  The user-facing ``lam`` is normalized so
that, divided by ``|S|``, the objective reads
``mean squared error + lam * sqrt(tc_{p,q,alpha}(X))`` under the empirical
marginals.  :func:`sgd_lambda` gives the conversion to ``lam14`` and
:func:`marginal_lambda` the equivalent constant for the form that uses
marginals ``p(i)**alpha / n_i`` directly.
"""
from __future__ import annotations

import logging
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np

from . import _kernels
from .errors import DivergenceError, InvalidInputError
from .linalg import FactorPair
from .synth import ObservationSet

_log = logging.getLogger(__name__)

DETERMINISTIC = "deterministic"
PARALLEL = "parallel"


@dataclass(frozen=True)
class TrainConfig:
    k: int = 30
    lam: float = 0.1
    alpha: float = 1.0
    epochs: int = 60
    learning_rate: float = 0.005
    lr_decay: float = 1.0
    init_scale: float = 0.01
    seed: int = 0
    mode: str = DETERMINISTIC

    def __post_init__(self):
        if self.k < 1:
            raise InvalidInputError("k must be at least 1")
        if self.lam < 0:
            raise InvalidInputError("lambda must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError("alpha must lie in [0, 1]")
        if self.epochs < 1:
            raise InvalidInputError("epochs must be at least 1")
        if not self.learning_rate > 0:
            raise InvalidInputError("learning_rate must be positive")
        if not self.lr_decay > 0:
            raise InvalidInputError("lr_decay must be positive")
        if not self.init_scale > 0:
            raise InvalidInputError("init_scale must be positive")
        if self.mode not in (DETERMINISTIC, PARALLEL):
            raise InvalidInputError(f"mode must be {DETERMINISTIC!r} or {PARALLEL!r}")


@dataclass(frozen=True, eq=False)
class FactorModel:
    """Trained factors plus the hyperparameters that produced them.

    Predictions are ``global_mean + U_i . V_j``.  Rows and columns never seen
    in training have all-zero factors and so predict the global mean.
    """

    factors: FactorPair
    alpha: float
    lam: float
    global_mean: float = 0.0
    epochs: int = 0
    learning_rate: float = 0.0
    lr_decay: float = 1.0
    init_scale: float = 0.0
    seed: int = 0
    history: list = field(default_factory=list)

    @property
    def k(self):
        return self.factors.k

    @property
    def shape(self):
        return self.factors.shape

    def predict(self, rows, cols):
        P, Q = _row_layout(self.factors)
        return _kernels.predict(P, Q, np.asarray(rows, dtype=np.int64),
                                np.asarray(cols, dtype=np.int64), float(self.global_mean))

    def full_factors(self) -> FactorPair:
        """Factor pair of the full prediction matrix, the mean folded in as one extra rank."""
        F = self.factors
        if self.global_mean == 0.0:
            return F
        U = np.vstack([F.U, np.full((1, F.n), self.global_mean)])
        V = np.vstack([F.V, np.ones((1, F.m))])
        return FactorPair(U, V)


def _row_layout(F):
    return np.ascontiguousarray(F.U.T), np.ascontiguousarray(F.V.T)


def sgd_lambda(lam, alpha, n_obs, n, m):
    """Penalty weight ``lam14`` of the per-observation objective for normalized ``lam``."""
    return lam * float(n_obs) ** (2.0 - alpha) * (float(n) * float(m)) ** ((alpha - 1.0) / 2.0)


def marginal_lambda(lam14, alpha, n_obs):
    """Weight giving the same objective when written with ``p(i)**alpha / n_i`` terms.

    Substituting ``p(i) = n_i / |S|`` turns ``lam13 * p(i)**alpha / n_i`` into
    ``lam13 * |S|**-alpha * n_i**(alpha-1)``, so ``lam13 = lam14 * |S|**(alpha-1)``.
    """
    return lam14 * float(n_obs) ** (alpha - 1.0)


def step_coefficients(lam14, alpha, row_counts, col_counts):
    """Per-row and per-column shrinkage ``(lam14/|S|) * count**(alpha-1)``.

    Rows or columns with zero count never take a step; their coefficient is 0.
    At ``alpha = 1`` every coefficient is exactly ``lam14/|S|``.
    """
    row_counts = np.asarray(row_counts, dtype=np.float64)
    col_counts = np.asarray(col_counts, dtype=np.float64)
    n_obs = row_counts.sum()
    base = lam14 / n_obs

    def coef(c):
        out = np.zeros_like(c)
        seen = c > 0
        out[seen] = base * np.power(c[seen], alpha - 1.0)
        return out

    return coef(row_counts), coef(col_counts)


def _lam14(model, S):
    return sgd_lambda(model.lam, model.alpha, len(S), S.n, S.m)


def regularization_term(model: FactorModel, S: ObservationSet) -> float:
    """Penalty part of :func:`objective`."""
    rc, cc = S.row_counts(), S.col_counts()
    cu, cv = step_coefficients(_lam14(model, S), model.alpha, rc, cc)
    F = model.factors
    return 0.5 * float(np.dot(rc * cu, np.sum(F.U ** 2, axis=0))
                       + np.dot(cc * cv, np.sum(F.V ** 2, axis=0)))


def objective(model: FactorModel, S: ObservationSet) -> float:
    """Training objective using counts from ``S`` (empirical marginals)."""
    P, Q = _row_layout(model.factors)
    fit = _kernels.squared_residuals(P, Q, S.rows, S.cols, S.values, float(model.global_mean))
    return fit + regularization_term(model, S)


def objective_true_marginals(model: FactorModel, S: ObservationSet, w, lam13=None) -> float:
    """Objective with known marginals: penalty ``lam13/2 (p_i**a/n_i |U_i|^2 + q_j**a/m_j |V_j|^2)`` per observation.

    ``lam13`` defaults to ``marginal_lambda(sgd_lambda(model.lam, ...))``, which
    makes the value coincide with :func:`objective` when ``w`` is the empirical
    marginals of ``S``.
    """
    if w.shape != S.shape:
        raise InvalidInputError("marginals do not cover the observation grid")
    rc, cc = S.row_counts(), S.col_counts()
    if model.alpha > 0 and (np.any(w.p[rc > 0] <= 0) or np.any(w.q[cc > 0] <= 0)):
        raise InvalidInputError("observed index has zero marginal")
    if lam13 is None:
        lam13 = marginal_lambda(_lam14(model, S), model.alpha, len(S))
    F = model.factors
    P, Q = _row_layout(F)
    fit = _kernels.squared_residuals(P, Q, S.rows, S.cols, S.values, float(model.global_mean))
    a = model.alpha
    # sum over observations of p_i**a/n_i |U_i|^2 collapses to sum_i p_i**a |U_i|^2 over seen rows
    ru = np.where(rc > 0, np.power(w.p, a), 0.0)
    rv = np.where(cc > 0, np.power(w.q, a), 0.0)
    return fit + 0.5 * lam13 * float(np.dot(ru, np.sum(F.U ** 2, axis=0))
                                     + np.dot(rv, np.sum(F.V ** 2, axis=0)))


def term_gradient(u, v, value, cu_i, cv_j):
    """Gradient of ``(value - u.v)^2 + (cu_i |u|^2 + cv_j |v|^2)/2`` in ``u`` and ``v``."""
    r = value - float(np.dot(u, v))
    return -2.0 * r * v + cu_i * u, -2.0 * r * u + cv_j * v


def sgd_step(model: FactorModel, triplet, config: TrainConfig, counts, lr=None) -> FactorModel:
    """Single SGD update on one observation; returns a new model.

    ``counts`` is ``(row_counts, col_counts)`` of the training set.  Only
    column ``i`` of ``U`` and column ``j`` of ``V`` change.  The step is
    ``eta`` times the negative gradient from :func:`term_gradient`, except
    that the shrinkage factor ``eta * c`` is capped at 1 so that a large
    penalty pulls a factor to zero instead of flipping its sign.
    """
    i, j, value = int(triplet[0]), int(triplet[1]), float(triplet[2])
    rc, cc = counts
    n_obs = float(np.sum(rc))
    lam14 = sgd_lambda(config.lam, config.alpha, n_obs, len(rc), len(cc))
    cu, cv = step_coefficients(lam14, config.alpha, rc, cc)
    eta = config.learning_rate if lr is None else lr
    F = model.factors
    U, V = F.U.copy(), F.V.copy()
    u, v = U[:, i].copy(), V[:, j].copy()
    r = value - model.global_mean - float(np.dot(u, v))
    # eta * (2 r v - c u), with the shrinkage factor eta * c capped at 1
    U[:, i] = u + eta * 2.0 * r * v - min(eta * cu[i], 1.0) * u
    V[:, j] = v + eta * 2.0 * r * u - min(eta * cv[j], 1.0) * v
    if not (np.all(np.isfinite(U[:, i])) and np.all(np.isfinite(V[:, j]))):
        raise DivergenceError(
            f"non-finite factors after step on ({i}, {j}); reduce the learning rate")
    return replace(model, factors=FactorPair(U, V))


def final_quarter_nonincreasing(history, tol=0.01):
    """True if each epoch objective in the last quarter is at most ``(1+tol)`` times the previous one."""
    h = np.asarray(history, dtype=np.float64)
    if h.size < 2:
        return True
    start = max(0, int(np.floor(0.75 * h.size)) - 1)
    tail = h[start:]
    return bool(np.all(tail[1:] <= tail[:-1] * (1.0 + tol) + 1e-12))


def train(S: ObservationSet, config: TrainConfig, track_objective=True) -> FactorModel:
    """Fit factors by ``epochs`` passes of SGD over seeded random permutations.

    Raises :class:`DivergenceError` if any factor entry becomes non-finite.
    """
    if len(S) == 0:
        raise InvalidInputError("cannot train on an empty observation set")
    n, m = S.shape
    mu = float(np.mean(S.values))
    vals = S.values - mu
    rc, cc = S.row_counts(), S.col_counts()
    lam14 = sgd_lambda(config.lam, config.alpha, len(S), n, m)
    cu, cv = step_coefficients(lam14, config.alpha, rc, cc)
    rng = np.random.default_rng(config.seed)
    P = np.ascontiguousarray(rng.normal(0.0, config.init_scale, (config.k, n)).T)
    Q = np.ascontiguousarray(rng.normal(0.0, config.init_scale, (config.k, m)).T)
    history = []
    nchunks = max(1, numba.get_num_threads()) * 4
    for epoch in range(config.epochs):
        order = rng.permutation(len(S))
        lr = config.learning_rate * config.lr_decay ** epoch
        if config.mode == PARALLEL:
            bad = _kernels.sgd_epoch_parallel(P, Q, S.rows, S.cols, vals, order, cu, cv, lr, nchunks)
        else:
            bad = _kernels.sgd_epoch(P, Q, S.rows, S.cols, vals, order, cu, cv, lr)
        if bad >= 0:
            raise DivergenceError(
                f"SGD diverged at epoch {epoch}, step {bad} (learning rate {lr:g}); "
                "use a smaller learning rate", epoch=epoch, step=int(bad))
        if track_objective:
            fit = _kernels.squared_residuals(P, Q, S.rows, S.cols, vals, 0.0)
            reg = 0.5 * float(np.dot(rc * cu, np.sum(P ** 2, axis=1))
                              + np.dot(cc * cv, np.sum(Q ** 2, axis=1)))
            history.append(fit + reg)
    P[rc == 0] = 0.0
    Q[cc == 0] = 0.0
    _log.debug("trained k=%d lam=%g alpha=%g: final objective %s", config.k, config.lam,
               config.alpha, history[-1] if history else "n/a")
    return FactorModel(FactorPair(P.T.copy(), Q.T.copy()), alpha=config.alpha, lam=config.lam, global_mean=mu,
                       epochs=config.epochs, learning_rate=config.learning_rate,
                       lr_decay=config.lr_decay, init_scale=config.init_scale,
                       seed=config.seed, history=history)


def derive_seed(base_seed, lam, alpha):
    """Seed for one grid point, a function of the base seed and the point's values."""
    bits = struct.unpack("<4I", struct.pack("<dd", float(lam), float(alpha)))
    return int(np.random.SeedSequence([int(base_seed), *bits]).generate_state(1)[0])


@dataclass
class SweepPoint:
    lam: float
    alpha: float
    seed: int
    metric: float
    extra: dict = field(default_factory=dict)
    error: str | None = None


@dataclass
class SweepResult:
    points: list

    def best(self, alpha=None):
        """Grid point with the smallest finite metric (optionally for one ``alpha``)."""
        pts = [p for p in self.points if np.isfinite(p.metric)
               and (alpha is None or p.alpha == alpha)]
        if not pts:
            return None
        return min(pts, key=lambda p: p.metric)


def _run_point(S, config, lam, alpha, eval_fn):
    seed = derive_seed(config.seed, lam, alpha)
    cfg = replace(config, lam=float(lam), alpha=float(alpha), seed=seed)
    try:
        model = train(S, cfg, track_objective=False)
        out = eval_fn(model)
    except (DivergenceError, InvalidInputError, FloatingPointError) as exc:
        _log.warning("grid point lam=%g alpha=%g failed: %s", lam, alpha, exc)
        return SweepPoint(float(lam), float(alpha), seed, float("nan"), error=str(exc))
    if isinstance(out, dict):
        extra = dict(out)
        metric = float(extra.pop("metric"))
    else:
        extra, metric = {}, float(out)
    return SweepPoint(float(lam), float(alpha), seed, metric, extra)


def sweep(S: ObservationSet, grid, config: TrainConfig, eval_fn, workers=1) -> SweepResult:
    """Train one model per ``(lam, alpha)`` grid point and score it with ``eval_fn``.

    ``eval_fn(model)`` returns a float, or a dict with a ``"metric"`` key plus
    extra columns.  Each point's seed comes from :func:`derive_seed`, so
    duplicated points give identical results.  A failing point is recorded
    with a NaN metric and its error message; the sweep carries on.
    """
    grid = [(float(lam), float(alpha)) for lam, alpha in grid]
    if not grid:
        raise InvalidInputError("sweep grid is empty")
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(_run_point, S, config, lam, alpha, eval_fn) for lam, alpha in grid]
            points = [f.result() for f in futs]
    else:
        points = [_run_point(S, config, lam, alpha, eval_fn) for lam, alpha in grid]
    return SweepResult(points)
