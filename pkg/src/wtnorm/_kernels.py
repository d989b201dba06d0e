"""Numba kernels for the SGD inner loops.

Kernels take factors in row layout, ``P = U.T`` (n x k) and ``Q = V.T``
(m x k), so each latent vector is contiguous in memory.
"""
import os

import numba
import numpy as np
from numba import njit, prange

# the bundled TBB is often too old for numba; prefer OpenMP unless the user chose
if "NUMBA_THREADING_LAYER_PRIORITY" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

# shrinkage drives unused factors geometrically toward 0; subnormals are slow
TINY = 1e-150

# The shrinkage factor lr * c is capped at 1.  Beyond that an explicit step
# would flip the sign of the factor and grow it, so the cap only changes
# steps that would otherwise oscillate and diverge.


@njit(cache=True)
def sgd_epoch(P, Q, rows, cols, vals, order, cu, cv, lr):
    """One pass over ``order``; returns the first position that went non-finite, else -1."""
    k = P.shape[1]
    for t in range(order.shape[0]):
        s = order[t]
        i = rows[s]
        j = cols[s]
        pred = 0.0
        for l in range(k):
            pred += P[i, l] * Q[j, l]
        r = vals[s] - pred
        a = min(lr * cu[i], 1.0)
        b = min(lr * cv[j], 1.0)
        check = r
        for l in range(k):
            u = P[i, l]
            v = Q[j, l]
            un = u + lr * 2.0 * r * v - a * u
            vn = v + lr * 2.0 * r * u - b * v
            if abs(un) < TINY:
                un = 0.0
            if abs(vn) < TINY:
                vn = 0.0
            P[i, l] = un
            Q[j, l] = vn
            check += un + vn
        if not np.isfinite(check):
            return t
    return -1


@njit(parallel=True, cache=True)
def sgd_epoch_parallel(P, Q, rows, cols, vals, order, cu, cv, lr, nchunks):
    """Lock-free variant: chunks of ``order`` race on shared factors (last write wins)."""
    k = P.shape[1]
    total = order.shape[0]
    size = (total + nchunks - 1) // nchunks
    bad = np.full(nchunks, -1, dtype=np.int64)
    for c in prange(nchunks):
        start = c * size
        stop = min(total, start + size)
        for t in range(start, stop):
            s = order[t]
            i = rows[s]
            j = cols[s]
            pred = 0.0
            for l in range(k):
                pred += P[i, l] * Q[j, l]
            r = vals[s] - pred
            a = min(lr * cu[i], 1.0)
            b = min(lr * cv[j], 1.0)
            check = r
            for l in range(k):
                u = P[i, l]
                v = Q[j, l]
                un = u + lr * 2.0 * r * v - a * u
                vn = v + lr * 2.0 * r * u - b * v
                if abs(un) < TINY:
                    un = 0.0
                if abs(vn) < TINY:
                    vn = 0.0
                P[i, l] = un
                Q[j, l] = vn
                check += un + vn
            if not np.isfinite(check):
                bad[c] = t
                break
    for c in range(nchunks):
        if bad[c] >= 0:
            return bad[c]
    return -1


@njit(cache=True)
def squared_residuals(P, Q, rows, cols, vals, offset):
    """Sum over observations of ``(vals - offset - P_i . Q_j)^2``."""
    k = P.shape[1]
    acc = 0.0
    for s in range(rows.shape[0]):
        i = rows[s]
        j = cols[s]
        pred = offset
        for l in range(k):
            pred += P[i, l] * Q[j, l]
        d = vals[s] - pred
        acc += d * d
    return acc


@njit(cache=True)
def predict(P, Q, rows, cols, offset):
    k = P.shape[1]
    out = np.empty(rows.shape[0])
    for s in range(rows.shape[0]):
        i = rows[s]
        j = cols[s]
        pred = offset
        for l in range(k):
            pred += P[i, l] * Q[j, l]
        out[s] = pred
    return out
