"""Command line: ``shqmm {generate,train,evaluate,compare,distance}``.

Exit codes: 0 success, 2 config/validation error, 3 numeric failure,
4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import datagen
from .dynamics import SymbolError, UnderflowError
from .experiment import (
    ConfigError,
    ExperimentConfig,
    checkpoint_kappa,
    compare,
    evaluate,
    load_checkpoint,
    load_data,
    model_dim_o,
    run_training,
    save_checkpoint,
    write_compare,
    write_metrics,
    write_report,
)
from .learning import StepFailure, TrainingAborted, stiefel_distance

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _read_json(path):
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def _experiment(args) -> ExperimentConfig:
    raw = _read_json(args.config)
    raw.pop("models", None)
    raw.pop("repeats", None)
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.out is not None:
        raw["out"] = args.out
    return ExperimentConfig.from_dict(raw)


def cmd_generate(args) -> int:
    raw = _read_json(args.config)
    gen = dict(raw.get("generator", raw))
    for key in ("preset", "count", "length", "proportions"):
        val = getattr(args, key)
        if val is not None:
            gen[key] = val
    if args.seed is not None:
        gen["seed"] = args.seed
    preset = gen.get("preset", "paper-classical")
    if preset not in datagen.PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(datagen.PRESETS)}")
    count, length, seed = int(gen.get("count", 40)), int(gen.get("length", 3000)), int(gen.get("seed", 0))
    if count < 1 or length < 1:
        raise ConfigError("count and length must be >= 1")
    props = gen.get("proportions")
    if props is None:
        props = (count, 0, 0) if count != 40 else (20, 10, 10)
    out = args.out or raw.get("out", ".")
    os.makedirs(out, exist_ok=True)
    ds = datagen.generate("", count, length, seed, preset=preset)
    ds = datagen.split_dataset(ds, props, seed)
    data_path, split_path = datagen.dataset_paths(out, args.name)
    datagen.write_dataset(ds, data_path)
    datagen.write_split(ds, split_path)
    print(f"wrote {data_path}: count={len(ds)} length={length} dimO={ds.dim_o} split={tuple(props)}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _experiment(args)
    train, val, _ = load_data(cfg, args.dataset, args.split)
    os.makedirs(cfg.out, exist_ok=True)
    model, rows = run_training(cfg, train, val)
    metrics = {}
    if val:
        metrics["val_da"] = evaluate(model, val).mean
    ckpt = os.path.join(cfg.out, "checkpoint.json")
    save_checkpoint(ckpt, model, cfg, metrics)
    write_metrics(os.path.join(cfg.out, "metrics.csv"), rows)
    print(f"wrote {ckpt} ({len(rows)} epochs)" + (f", val DA {metrics['val_da']:.4f}" if val else ""))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ds = datagen.read_dataset(args.dataset)
    if ds.dim_o != model_dim_o(model):
        raise ConfigError(f"dataset dimO={ds.dim_o} but model has {model_dim_o(model)} symbols")
    seqs = ds.sequences
    split = args.split or (os.path.splitext(args.dataset)[0] + ".split")
    if args.subset != "all":
        seqs = datagen.read_split(split, ds).subset(args.subset)
        if not seqs:
            raise ConfigError(f"no sequences tagged {args.subset!r}")
    report = evaluate(model, seqs)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "da_report.csv")
    write_report(path, report)
    print(f"DA mean {report.mean:.6f} std {report.std:.6f} over {len(seqs)} sequences -> {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    raw = _read_json(args.config)
    models = raw.pop("models", None)
    repeats = raw.pop("repeats", 1)
    if args.repeats is not None:
        repeats = args.repeats
    repeats = int(repeats)
    if not models:
        raise ConfigError("compare needs a config with a non-empty 'models' list")
    if args.seed is not None:
        raw["seed"] = args.seed
    configs = [ExperimentConfig.from_dict({**raw, **m}) for m in models]
    base = configs[0]
    train, val, test = load_data(base, args.dataset, args.split)
    if not test:
        raise ConfigError("compare needs test sequences (a split file with 'test' tags)")
    rows = compare(configs, train, val, test, repeats)
    out = args.out or raw.get("out", ".")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "compare.csv")
    write_compare(path, rows)
    print(f"{'model':28s} {'N_P':>5s} {'test DA':>9s} {'STD':>8s} {'median':>8s}")
    for r in rows:
        c = r.as_csv()
        print(f"{c[0]:28s} {str(c[2]):>5s} {c[3]:9.4f} {c[4]:8.4f} {c[5]:8.4f}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_distance(args) -> int:
    d = stiefel_distance(checkpoint_kappa(args.checkpoints[0]), checkpoint_kappa(args.checkpoints[1]))
    print(repr(d))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dataset", help="dataset file")
    common.add_argument("--split", help="split file (default: <dataset>.split if present)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="shqmm", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="sample a dataset")
    g.add_argument("--preset", choices=sorted(datagen.PRESETS))
    g.add_argument("--count", type=int)
    g.add_argument("--length", type=int)
    g.add_argument("--proportions", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    g.add_argument("--name", default="dataset", help="file stem")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", parents=[common], help="train a model, write checkpoint + metrics")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", parents=[common], help="DA report for a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--subset", default="all", choices=["all", *datagen.SPLITS])
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", parents=[common], help="train several models, tabulate test DA")
    c.add_argument("--repeats", type=int, help="trainings per model (default: config or 1)")
    c.set_defaults(func=cmd_compare)

    d = sub.add_parser("distance", parents=[common], help="Stiefel distance between two checkpoints")
    d.add_argument("checkpoints", nargs=2)
    d.set_defaults(func=cmd_distance)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UnderflowError, StepFailure, TrainingAborted, ArithmeticError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SymbolError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
