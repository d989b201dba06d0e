"""Seeded end-to-end experiments: two-block synthetic curves and alpha sweeps."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import subprocess
from dataclasses import asdict, dataclass
from functools import partial
from importlib import metadata
from pathlib import Path

import numpy as np

from . import data as data_mod
from .errors import InvalidInputError
from .evaluate import block_errors, holdout_rmse
from .linalg import FactorPair
from .norms import tc, tc_pq
from .synth import (gen_longtail_dataset, gen_orthogonal_factors, marginals_of,
                    sample_observations, two_block_distribution)
from .train import TrainConfig, sweep

_log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (1.0, 0.9, 0.75, 0.5, 0.0)


@dataclass(frozen=True)
class SyntheticConfig:
    """Two-block experiment; training fields mirror :class:`TrainConfig`."""

    n_A: int = 300
    n_B: int = 4700
    k_true: int = 2
    noise_sd: float = 1.0
    n_obs: int = 140_000
    lam_min: float = 1e-3
    lam_max: float = 10.0
    lam_points: int = 30
    alphas: tuple = (1.0, 0.0)
    data_seed: int = 0
    k: int = 30
    epochs: int = 300
    learning_rate: float = 0.05
    lr_decay: float = 0.99
    init_scale: float = 0.1
    seed: int = 0
    mode: str = "deterministic"
    workers: int = 1

    def train_config(self):
        return TrainConfig(k=self.k, epochs=self.epochs, learning_rate=self.learning_rate,
                           lr_decay=self.lr_decay, init_scale=self.init_scale,
                           seed=self.seed, mode=self.mode)

    def lam_grid(self):
        return lam_grid(self.lam_min, self.lam_max, self.lam_points)


@dataclass(frozen=True)
class AlphaSweepConfig:
    """Alpha sweep on a generated (or loaded) ratings set with validation-selected lambda."""

    n_users: int = 2000
    n_items: int = 1000
    n_obs: int = 200_000
    rank: int = 10
    exponent: float = 0.8
    noise_sd: float = 1.0
    valid_count: int = 20_000
    test_count: int = 20_000
    lam_min: float = 0.05
    lam_max: float = 1.0
    lam_points: int = 9
    alphas: tuple = DEFAULT_ALPHAS
    data_seed: int = 0
    k: int = 30
    epochs: int = 25
    learning_rate: float = 0.02
    lr_decay: float = 0.92
    init_scale: float = 0.1
    seed: int = 0
    mode: str = "deterministic"
    workers: int = 1

    def train_config(self):
        return TrainConfig(k=self.k, epochs=self.epochs, learning_rate=self.learning_rate,
                           lr_decay=self.lr_decay, init_scale=self.init_scale,
                           seed=self.seed, mode=self.mode)

    def lam_grid(self):
        return lam_grid(self.lam_min, self.lam_max, self.lam_points)


def lam_grid(lo, hi, points):
    if not (0 < lo <= hi) or points < 1:
        raise InvalidInputError("lambda grid needs 0 < lam_min <= lam_max and lam_points >= 1")
    return np.logspace(np.log10(lo), np.log10(hi), int(points))


# -- two-block synthetic experiment -----------------------------------------

def synthetic_problem(cfg: SyntheticConfig):
    """Truth factors, distribution and training sample for ``cfg``."""
    D = two_block_distribution(cfg.n_A, cfg.n_B)
    ss = np.random.SeedSequence(cfg.data_seed)
    truth_seed, sample_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    truth = gen_orthogonal_factors(D.n, D.m, cfg.k_true, truth_seed)
    S = sample_observations(truth, D, cfg.n_obs, cfg.noise_sd, sample_seed)
    return truth, D, S


def _synthetic_eval(model, truth, D):
    mse_a, mse_b = block_errors(model, truth, D)
    F = model.full_factors()
    return {
        "metric": 0.5 * mse_a + 0.5 * mse_b,
        "excess_A": mse_a,
        "excess_B": mse_b,
        "tc": tc(F),
        "tc_pq": tc_pq(F, marginals_of(D), 1.0),
    }


CURVE_COLUMNS = ["alpha", "lambda", "seed", "excess_error", "excess_A", "excess_B",
                 "tc", "tc_pq", "error"]


def run_synthetic_blocks(cfg: SyntheticConfig | None = None):
    """Excess-error curves over the lambda grid for each alpha; returns CSV-ready rows."""
    cfg = cfg or SyntheticConfig()
    truth, D, S = synthetic_problem(cfg)
    grid = [(lam, a) for a in cfg.alphas for lam in cfg.lam_grid()]
    res = sweep(S, grid, cfg.train_config(), partial(_synthetic_eval, truth=truth, D=D),
                workers=cfg.workers)
    rows = []
    for p in res.points:
        rows.append({
            "alpha": p.alpha, "lambda": p.lam, "seed": p.seed,
            "excess_error": p.metric,
            "excess_A": p.extra.get("excess_A", float("nan")),
            "excess_B": p.extra.get("excess_B", float("nan")),
            "tc": p.extra.get("tc", float("nan")),
            "tc_pq": p.extra.get("tc_pq", float("nan")),
            "error": p.error or "",
        })
    return rows


def curve_minima(rows):
    """``{alpha: (lambda, excess_error)}`` at each alpha's minimum."""
    out = {}
    for r in rows:
        if not np.isfinite(r["excess_error"]):
            continue
        a = r["alpha"]
        if a not in out or r["excess_error"] < out[a][1]:
            out[a] = (r["lambda"], r["excess_error"])
    return out


# -- alpha sweep ----------------------------------------------------------------

ALPHA_COLUMNS = ["alpha", "best_lambda", "valid_rmse", "test_rmse"]


def _valid_rmse(model, valid):
    return holdout_rmse(model, valid)


def _valid_and_test(model, valid, test):
    return {"metric": holdout_rmse(model, valid), "test_rmse": holdout_rmse(model, test)}


def run_alpha_sweep(split, alphas, cfg: AlphaSweepConfig):
    """Validation-selected lambda and test RMSE for every alpha.

    ``split`` is a :class:`~wtnorm.data.Split`.  Every grid model is scored on
    both held-out sets; the reported test RMSE is that of the model with the
    best validation RMSE, so test data never influences the choice of lambda.
    Returns one row per alpha.
    """
    if not alphas:
        raise InvalidInputError("alpha list is empty")
    base = cfg.train_config()
    score = partial(_valid_and_test, valid=split.validation, test=split.test)
    rows = []
    for a in alphas:
        grid = [(lam, a) for lam in cfg.lam_grid()]
        best = sweep(split.train, grid, base, score, workers=cfg.workers).best()
        if best is None:
            rows.append({"alpha": float(a), "best_lambda": float("nan"),
                         "valid_rmse": float("nan"), "test_rmse": float("nan")})
            continue
        rows.append({"alpha": float(a), "best_lambda": best.lam,
                     "valid_rmse": best.metric, "test_rmse": best.extra["test_rmse"]})
        _log.info("alpha=%g: lambda=%g valid=%.4f test=%.4f", a, best.lam, best.metric,
                  best.extra["test_rmse"])
    return rows


def generated_split(cfg: AlphaSweepConfig):
    """Long-tail (or, with ``exponent=0``, uniform) ratings split into train/valid/test."""
    S, _ = gen_longtail_dataset(cfg.n_users, cfg.n_items, cfg.n_obs, cfg.rank,
                                cfg.exponent, cfg.noise_sd, cfg.data_seed)
    return data_mod.split(S, cfg.valid_count, cfg.test_count, cfg.data_seed)


# -- outputs --------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, rows, columns):
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])
    return path


def read_rows(path):
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def version_string():
    try:
        v = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        v = "unknown"
    try:
        here = Path(__file__).resolve().parent
        desc = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=here,
                              capture_output=True, text=True, timeout=5)
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{v}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def _jsonable(v):
    if isinstance(v, tuple):
        return list(v)
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


_NON_PATH_INPUTS = ("ids", "n_rows", "n_cols")


def _input_ref(key, value):
    # absolute paths let a manifest be replayed from any working directory
    if key in _NON_PATH_INPUTS:
        return str(value)
    p = Path(str(value))
    return str(p.resolve()) if p.exists() else str(value)


def write_manifest(out_dir, command, config, inputs=None, seeds=None, outputs=()):
    """Record everything needed to rerun ``command`` into ``out_dir/manifest.json``."""
    out_dir = Path(out_dir)
    cfg = config if isinstance(config, dict) else asdict(config)
    doc = {
        "command": command,
        "config": {k: _jsonable(v) for k, v in cfg.items()},
        "inputs": {k: _input_ref(k, v) for k, v in (inputs or {}).items()},
        "seeds": seeds or {k: cfg[k] for k in ("seed", "data_seed") if k in cfg},
        "version": version_string(),
        "outputs": {Path(p).name: hashlib.sha256(Path(p).read_bytes()).hexdigest()
                    for p in outputs},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path
