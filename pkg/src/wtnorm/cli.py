"""Command-line entry point.

Every subcommand takes ``--config FILE`` (flat ``key = value`` text or a run
manifest) plus flag overrides named after the config keys, writes its outputs
to ``--out DIR`` together with ``manifest.json``, and exits with 0 on
success, 1 on usage errors, 2 on data errors and 3 on numerical divergence.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from functools import partial
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import data as data_mod
from . import experiments as ex
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import DivergenceError, InvalidInputError
from .evaluate import evaluate, holdout_rmse
from .linalg import FactorPair, as_matrix
from .norms import Marginals, complexity_report
from .synth import (gen_orthogonal_lowrank, marginals_of, sample_observations,
                    two_block_distribution, uniform_distribution)
from .train import FactorModel, TrainConfig, sweep, train

_log = logging.getLogger("wtnorm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class GenConfig:
    n: int = 500
    m: int = 500
    k: int = 5
    seed: int = 0
    count: int = 0
    noise_sd: float = 1.0
    distribution: str = "uniform"
    n_A: int = 0
    n_B: int = 0


@dataclass(frozen=True)
class SweepConfig:
    k: int = 30
    epochs: int = 60
    learning_rate: float = 0.005
    lr_decay: float = 1.0
    init_scale: float = 0.01
    seed: int = 0
    mode: str = "deterministic"
    lam_min: float = 1e-3
    lam_max: float = 10.0
    lam_points: int = 30
    alphas: tuple = (1.0, 0.0)
    valid_count: int = 0
    workers: int = 1


@dataclass(frozen=True)
class EvalConfig:
    distribution: str = "uniform"
    n_A: int = 0
    n_B: int = 0
    draws: int = 1_000_000
    seed: int = 0


@dataclass(frozen=True)
class NormsConfig:
    alpha: float = 1.0
    marginals: str = "uniform"
    n_A: int = 0
    n_B: int = 0


@dataclass(frozen=True)
class SplitConfig:
    valid_count: int = 0
    test_count: int = 0
    seed: int = 0


# -- helpers ----------------------------------------------------------------------

def _schema(inputs):
    ids = inputs.get("ids") or "map"
    n = inputs.get("n_rows")
    m = inputs.get("n_cols")
    return data_mod.Schema(ids=ids, n=int(n) if n else None, m=int(m) if m else None)


def _require(inputs, key):
    if not inputs.get(key):
        raise UsageError(f"--{key.replace('_', '-')} is required")
    return inputs[key]


def load_matrix(path):
    """Dense matrix from ``.npy`` or delimited text."""
    path = Path(path)
    if path.is_dir():
        return load_checkpoint(path).full_factors()
    if path.suffix == ".npy":
        return as_matrix(np.load(path))
    text = path.read_text(encoding="utf-8")
    delim = "," if "," in text else None
    try:
        return as_matrix(np.loadtxt(path, delimiter=delim, ndmin=2))
    except ValueError as exc:
        raise InvalidInputError(f"{path}: {exc}") from None


def _distribution(kind, n, m, n_A, n_B):
    if kind == "uniform":
        return uniform_distribution(n, m)
    if kind == "two-block":
        return two_block_distribution(n_A, n_B, n, m)
    raise UsageError(f"unknown distribution {kind!r} (uniform or two-block)")


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


# -- subcommands -----------------------------------------------------------------

def cmd_gen_lowrank(cfg: GenConfig, inputs, out):
    Y, F = gen_orthogonal_lowrank(cfg.n, cfg.m, cfg.k, cfg.seed)
    np.save(out / "target.npy", Y)
    truth = FactorModel(F, alpha=0.0, lam=0.0, seed=cfg.seed)
    save_checkpoint(truth, out / "truth")
    outputs = [out / "target.npy"]
    if cfg.count > 0:
        D = _distribution(cfg.distribution, cfg.n, cfg.m, cfg.n_A, cfg.n_B)
        S = sample_observations(F, D, cfg.count, cfg.noise_sd, cfg.seed + 1)
        data_mod.save_triplets(out / "observations.csv", S)
        outputs.append(out / "observations.csv")
    return outputs


def cmd_synth_blocks(cfg: ex.SyntheticConfig, inputs, out):
    rows = ex.run_synthetic_blocks(cfg)
    curve = ex.write_rows(out / "curve.csv", rows, ex.CURVE_COLUMNS)
    minima = {str(a): {"lambda": lam, "excess_error": err}
              for a, (lam, err) in ex.curve_minima(rows).items()}
    _write_json(out / "summary.json", {"minima": minima})
    print(json.dumps(minima, indent=2))
    return [curve]


def cmd_train(cfg: TrainConfig, inputs, out):
    ds = data_mod.load_triplets(_require(inputs, "data"), _schema(inputs))
    model = train(ds.observations, cfg)
    save_checkpoint(model, out / "model")
    data_mod.save_id_map(out / "user_map.csv", ds.user_ids)
    data_mod.save_id_map(out / "item_map.csv", ds.item_ids)
    hist = ex.write_rows(out / "history.csv",
                         [{"epoch": e + 1, "objective": h} for e, h in enumerate(model.history)],
                         ["epoch", "objective"])
    return [hist]


def cmd_sweep(cfg: SweepConfig, inputs, out):
    ds = data_mod.load_triplets(_require(inputs, "data"), _schema(inputs))
    S = ds.observations
    if inputs.get("valid"):
        valid = data_mod.load_triplets(inputs["valid"], data_mod.Schema(ids="index", n=S.n, m=S.m))
        valid = valid.observations
    elif cfg.valid_count > 0:
        parts = data_mod.split(S, cfg.valid_count, 0, cfg.seed)
        S, valid = parts.train, parts.validation
    else:
        raise UsageError("sweep needs --valid FILE or valid_count > 0")
    base = TrainConfig(k=cfg.k, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                       lr_decay=cfg.lr_decay, init_scale=cfg.init_scale, seed=cfg.seed,
                       mode=cfg.mode)
    grid = [(lam, a) for a in cfg.alphas for lam in ex.lam_grid(cfg.lam_min, cfg.lam_max, cfg.lam_points)]
    res = sweep(S, grid, base, partial(ex._valid_rmse, valid=valid), workers=cfg.workers)
    rows = [{"alpha": p.alpha, "lambda": p.lam, "seed": p.seed, "valid_rmse": p.metric,
             "error": p.error or ""} for p in res.points]
    path = ex.write_rows(out / "sweep.csv", rows, ["alpha", "lambda", "seed", "valid_rmse", "error"])
    best = res.best()
    summary = {"best": None if best is None else
               {"alpha": best.alpha, "lambda": best.lam, "valid_rmse": best.metric}}
    _write_json(out / "summary.json", summary)
    print(json.dumps(summary, indent=2))
    return [path]


def cmd_alpha_sweep(cfg: ex.AlphaSweepConfig, inputs, out):
    if inputs.get("data"):
        ds = data_mod.load_triplets(inputs["data"], _schema(inputs))
        parts = data_mod.split(ds, cfg.valid_count, cfg.test_count, cfg.data_seed)
    else:
        parts = ex.generated_split(cfg)
    rows = ex.run_alpha_sweep(parts, cfg.alphas, cfg)
    path = ex.write_rows(out / "alpha_sweep.csv", rows, ex.ALPHA_COLUMNS)
    for r in rows:
        print(f"alpha={r['alpha']:<5g} lambda={r['best_lambda']:.4g} "
              f"valid={r['valid_rmse']:.4f} test={r['test_rmse']:.4f}")
    return [path]


def cmd_eval(cfg: EvalConfig, inputs, out):
    model = load_checkpoint(_require(inputs, "model"))
    report = {}
    if inputs.get("test"):
        n, m = model.shape
        S = data_mod.load_triplets(inputs["test"], data_mod.Schema(ids="index", n=n, m=m))
        report["rmse"] = holdout_rmse(model, S.observations)
    if inputs.get("target"):
        target = load_matrix(inputs["target"])
        n, m = model.shape
        D = _distribution(cfg.distribution, n, m, cfg.n_A, cfg.n_B)
        rep = evaluate(model, D, X_star=target)
        report.update({k: v for k, v in rep.to_dict().items() if v is not None})
    if not report:
        raise UsageError("eval needs --test FILE and/or --target FILE")
    path = _write_json(out / "eval.json", report)
    print(json.dumps(report, indent=2))
    return [path]


def _marginals_for(cfg: NormsConfig, shape):
    n, m = shape
    choice = cfg.marginals
    if choice == "uniform":
        return Marginals.uniform(n, m)
    if choice == "two-block":
        return marginals_of(two_block_distribution(cfg.n_A, cfg.n_B, n, m))
    if choice.startswith("empirical:"):
        ds = data_mod.load_triplets(choice.split(":", 1)[1], data_mod.Schema(ids="index", n=n, m=m))
        return data_mod.empirical_marginals(ds)
    raise UsageError(f"unknown marginals {choice!r} (uniform, two-block or empirical:FILE)")


def cmd_norms(cfg: NormsConfig, inputs, out):
    if inputs.get("model"):
        X = load_checkpoint(inputs["model"]).full_factors()
    else:
        X = load_matrix(_require(inputs, "matrix"))
    w = _marginals_for(cfg, X.shape)
    report = complexity_report(X, w, cfg.alpha).to_dict()
    path = _write_json(out / "norms.json", report)
    print(json.dumps(report, indent=2))
    return [path]


def cmd_split(cfg: SplitConfig, inputs, out):
    ds = data_mod.load_triplets(_require(inputs, "data"), _schema(inputs))
    parts = data_mod.split(ds, cfg.valid_count, cfg.test_count, cfg.seed)
    paths = []
    for name in ("train", "validation", "test"):
        p = out / f"{name}.csv"
        data_mod.save_triplets(p, getattr(parts, name))
        paths.append(p)
    data_mod.save_id_map(out / "user_map.csv", ds.user_ids)
    data_mod.save_id_map(out / "item_map.csv", ds.item_ids)
    return paths


COMMANDS = {
    "gen-lowrank": (cmd_gen_lowrank, GenConfig, []),
    "synth-blocks": (cmd_synth_blocks, ex.SyntheticConfig, []),
    "train": (cmd_train, TrainConfig, ["data", "ids", "n_rows", "n_cols"]),
    "sweep": (cmd_sweep, SweepConfig, ["data", "valid", "ids", "n_rows", "n_cols"]),
    "alpha-sweep": (cmd_alpha_sweep, ex.AlphaSweepConfig, ["data", "ids", "n_rows", "n_cols"]),
    "eval": (cmd_eval, EvalConfig, ["model", "test", "target"]),
    "norms": (cmd_norms, NormsConfig, ["matrix", "model"]),
    "split": (cmd_split, SplitConfig, ["data", "ids", "n_rows", "n_cols"]),
}

COMMAND_HELP = {
    "gen-lowrank": "random orthogonal low-rank target, optionally with a noisy sample",
    "synth-blocks": "two-block synthetic experiment: excess error over a lambda grid",
    "train": "fit a factor model to a triplet file",
    "sweep": "lambda/alpha grid scored by validation RMSE",
    "alpha-sweep": "validation-selected test RMSE for each alpha",
    "eval": "held-out RMSE and/or distribution-weighted excess error of a checkpoint",
    "norms": "trace-norm complexity report of a matrix or checkpoint",
    "split": "random train/validation/test split of a triplet file",
}

INPUT_HELP = {
    "data": "triplet file user_id,item_id,rating[,timestamp]",
    "valid": "validation triplets (dense indices)",
    "ids": "'map' to densify external ids, 'index' if ids are already 0-based",
    "n_rows": "number of rows when --ids index",
    "n_cols": "number of columns when --ids index",
    "model": "checkpoint directory",
    "test": "test triplets (dense indices)",
    "target": "noise-free target: .npy, text matrix or checkpoint directory",
    "matrix": "matrix file (.npy or delimited text) or checkpoint directory",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="wtnorm", description="Weighted trace-norm matrix completion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, cls, input_keys) in COMMANDS.items():
        p = sub.add_parser(name, help=COMMAND_HELP[name])
        p.add_argument("--config", help="config file or run manifest")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        for key in input_keys:
            p.add_argument(f"--{key.replace('_', '-')}", dest=f"in_{key}", help=INPUT_HELP[key])
        for f in fields(cls):
            flags = [f"--{f.name.replace('_', '-')}"]
            if f.name == "lam":
                flags.append("--lambda")
            if f.name != f.name.replace("_", "-"):
                flags.append(f"--{f.name}")
            p.add_argument(*flags, dest=f"cfg_{f.name}", metavar="VALUE")
    rerun = sub.add_parser("rerun", help="replay a run manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("--out", default=".")
    return parser


def run_command(name, cfg_mapping, inputs, out):
    """Build the config for ``name`` and run it, writing outputs and a manifest to ``out``."""
    handler, cls, _ = COMMANDS[name]
    try:
        cfg = config_mod.build(cls, cfg_mapping)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = handler(cfg, inputs, out)
    ex.write_manifest(out, name, asdict(cfg), inputs=inputs, outputs=outputs)
    return outputs


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "rerun":
            doc = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
            if doc.get("command") not in COMMANDS:
                raise UsageError(f"manifest names unknown command {doc.get('command')!r}")
            run_command(doc["command"], doc["config"], doc.get("inputs", {}), args.out)
            return EXIT_OK
        mapping = {}
        if args.config:
            mapping.update(config_mod.read_config_file(args.config))
        overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
        inputs = {k[3:]: v for k, v in vars(args).items() if k.startswith("in_") and v is not None}
        run_command(args.command, {**mapping, **overrides}, inputs, args.out)
        return EXIT_OK
    except UsageError as exc:
        print(f"wtnorm: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"wtnorm: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (InvalidInputError, OSError, json.JSONDecodeError) as exc:
        print(f"wtnorm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
