"""Model checkpoints: ``model.json`` metadata plus little-endian float64 ``U.bin``/``V.bin``."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .linalg import FactorPair
from .train import FactorModel

FORMAT_VERSION = 1


def save_checkpoint(model: FactorModel, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    F = model.factors
    meta = {
        "format_version": FORMAT_VERSION,
        "n": F.n,
        "m": F.m,
        "k": F.k,
        "alpha": model.alpha,
        "lambda": model.lam,
        "seed": model.seed,
        "global_mean": model.global_mean,
        "epochs": model.epochs,
        "learning_rate": model.learning_rate,
        "lr_decay": model.lr_decay,
        "init_scale": model.init_scale,
        "history": [float(h) for h in model.history],
    }
    (d / "model.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    np.ascontiguousarray(F.U, dtype="<f8").tofile(d / "U.bin")
    np.ascontiguousarray(F.V, dtype="<f8").tofile(d / "V.bin")
    return d


def load_checkpoint(directory) -> FactorModel:
    d = Path(directory)
    try:
        meta = json.loads((d / "model.json").read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InvalidInputError(f"{d} is not a checkpoint directory (no model.json)") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint format {meta.get('format_version')!r}")
    k, n, m = meta["k"], meta["n"], meta["m"]
    U = np.fromfile(d / "U.bin", dtype="<f8")
    V = np.fromfile(d / "V.bin", dtype="<f8")
    if U.size != k * n or V.size != k * m:
        raise InvalidInputError("factor files do not match the recorded dimensions")
    return FactorModel(
        FactorPair(U.reshape(k, n), V.reshape(k, m)),
        alpha=meta["alpha"], lam=meta["lambda"], global_mean=meta["global_mean"],
        epochs=meta["epochs"], learning_rate=meta["learning_rate"],
        lr_decay=meta["lr_decay"], init_scale=meta["init_scale"], seed=meta["seed"],
        history=meta.get("history", []),
    )
