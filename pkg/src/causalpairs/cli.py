"""Command-line interface.

Subcommands: gen, train, lofo, ablate-adv, ablate-m, calibrate,
consistency, emit. Global flags: --seed, --config (JSON file of
experiment settings), --out (output directory), --dim, --pairs.

Exit codes: 0 on success, 2 on configuration/usage errors, 3 when a
numeric failure aborts a computation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .baselines import ScoreMethod, calibrate_threshold, score_sample
from .consistency import save_consistency_csv
from .datagen import GenConfig, generate_epoch, save_dataset, substream
from .engine import NumericError
from .harness import (
    ExperimentConfig,
    emit,
    parse_table,
    run_adv_ablation,
    run_consistency_suite,
    run_lofo,
    run_sample_complexity,
)
from .model import save_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="causalpairs",
        description="Causal discovery on high-dimensional representation pairs.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master random seed")
    common.add_argument("--config", type=str, default=None, help="JSON settings file")
    common.add_argument("--out", type=str, default=None, help="output directory")
    common.add_argument("--dim", type=int, default=None, help="representation dimensionality")
    common.add_argument("--pairs", type=int, default=None, help="pairs per dataset (m)")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic dataset file")
    p.add_argument("--n", type=int, default=1000, help="number of datasets to generate")

    p = sub.add_parser("train", parents=[common], help="train the model, save a checkpoint")
    p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("lofo", parents=[common], help="leave-one-function-out benchmark")
    p.add_argument("--runs", type=int, default=None)
    p.add_argument("--methods", type=str, default=None, help="comma-separated method names")

    p = sub.add_parser("ablate-adv", parents=[common], help="adversary-weight ablation")
    p.add_argument("--runs", type=int, default=None)

    p = sub.add_parser("ablate-m", parents=[common], help="sample-complexity ablation")
    p.add_argument("--runs", type=int, default=None)

    p = sub.add_parser("calibrate", parents=[common], help="calibrate score thresholds")
    p.add_argument("--n", type=int, default=200, help="validation datasets per method")

    p = sub.add_parser("consistency", parents=[common], help="causal-consistency suite")
    p.add_argument("--methods", type=str, default=None, help="comma-separated method names")

    p = sub.add_parser("emit", parents=[common], help="re-emit a result CSV as markdown")
    p.add_argument("table", type=str, help="path of a result CSV produced by this tool")
    p.add_argument("--format", choices=("csv", "markdown"), default="markdown")
    return parser


def _load_experiment_config(args) -> ExperimentConfig:
    """Merge defaults <- JSON config file <- command-line flags."""
    doc = {}
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config!r}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
    for flag in ("seed", "dim", "pairs", "out"):
        val = getattr(args, flag, None)
        if val is not None:
            doc["out_dir" if flag == "out" else flag] = val
    for flag in ("runs", "epochs"):
        val = getattr(args, flag, None)
        if val is not None:
            doc[flag] = val
    methods = getattr(args, "methods", None)
    if methods is not None:
        doc["methods"] = tuple(m.strip() for m in methods.split(",") if m.strip())
    try:
        return ExperimentConfig(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    # every result directory carries the exact configuration that made it
    (out / "config.json").write_text(cfg.to_json() + "\n", encoding="utf-8")
    return out


def _emit_both(table, out: Path, stem: str) -> None:
    emit(table, out / f"{stem}.csv", "csv")
    emit(table, out / f"{stem}.md", "markdown")
    print(f"wrote {out / f'{stem}.csv'} and {out / f'{stem}.md'}")


def _cmd_gen(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    gen = GenConfig(dim=cfg.dim, pairs=cfg.pairs, seed=cfg.seed)
    rng = np.random.default_rng(substream(cfg.seed, 0))
    samples = list(generate_epoch(gen, rng, n=args.n))
    path = out / "dataset.bin"
    save_dataset(path, samples)
    print(f"wrote {len(samples)} datasets to {path}")
    return EXIT_OK


def _cmd_train(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    params, metrics = train(cfg.train_config(cfg.seed))
    ckpt = out / "model.ckpt"
    save_checkpoint(ckpt, params, hyper={"seed": cfg.seed, "epochs": cfg.epochs})
    (out / "train_metrics.json").write_text(json.dumps(metrics, indent=1), encoding="utf-8")
    print(f"wrote {ckpt}; final val_acc={metrics[-1]['val_acc']:.3f}")
    return EXIT_OK


def _cmd_lofo(args, cfg: ExperimentConfig) -> int:
    table = run_lofo(cfg)
    _emit_both(table, _out_dir(cfg), "lofo")
    return EXIT_OK


def _cmd_ablate_adv(args, cfg: ExperimentConfig) -> int:
    table, deltas = run_adv_ablation(cfg)
    out = _out_dir(cfg)
    _emit_both(table, out, "adv_ablation")
    if deltas is not None:
        (out / "adv_deltas.json").write_text(json.dumps(deltas), encoding="utf-8")
        print(f"per-run (with - without adversary) average deltas: {deltas}")
    return EXIT_OK


def _cmd_ablate_m(args, cfg: ExperimentConfig) -> int:
    table = run_sample_complexity(cfg)
    _emit_both(table, _out_dir(cfg), "sample_complexity")
    return EXIT_OK


def _cmd_calibrate(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(cfg)
    gen = GenConfig(dim=cfg.dim, pairs=cfg.pairs, seed=cfg.seed)
    rng = np.random.default_rng(substream(cfg.seed, 7777))
    val = list(generate_epoch(gen, rng, n=args.n))
    labels = [s.label for s in val]
    thresholds = {}
    for method in ScoreMethod:
        scores = [score_sample(method, s, cfg.lam_ridge) for s in val]
        thresholds[method.name.lower()] = calibrate_threshold(scores, labels)
    path = out / "thresholds.json"
    path.write_text(json.dumps(thresholds, sort_keys=True, indent=1), encoding="utf-8")
    print(f"wrote {path}: {thresholds}")
    return EXIT_OK


def _cmd_consistency(args, cfg: ExperimentConfig) -> int:
    methods = ("ncinet",)
    if getattr(args, "methods", None):
        methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    reports = run_consistency_suite(cfg, methods=methods)
    out = _out_dir(cfg)
    path = out / "consistency.csv"
    save_consistency_csv(path, reports)
    for rep in reports:
        print(f"{rep.graph} {rep.method}: {rep.mean:.3f} +/- {rep.std:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


def _cmd_emit(args, cfg: ExperimentConfig) -> int:
    try:
        table = parse_table(args.table)
    except (OSError, ValueError, IndexError) as exc:
        raise ConfigError(f"cannot parse table {args.table!r}: {exc}") from exc
    out = _out_dir(cfg)
    suffix = "md" if args.format == "markdown" else "csv"
    path = out / f"{Path(args.table).stem}.{suffix}"
    emit(table, path, args.format)
    print(f"wrote {path}")
    return EXIT_OK


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "lofo": _cmd_lofo,
    "ablate-adv": _cmd_ablate_adv,
    "ablate-m": _cmd_ablate_m,
    "calibrate": _cmd_calibrate,
    "consistency": _cmd_consistency,
    "emit": _cmd_emit,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_experiment_config(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args, cfg)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
