"""Batch-experiment driver.

    mcl analyze   --config exp.yaml [--reference]
    mcl init      --config exp.yaml
    mcl pretrain  --config exp.yaml
    mcl train     --config exp.yaml --profile desk --seed 0
    mcl eval      --config exp.yaml --checkpoint runs/x/seed0/best
    mcl export-features --config exp.yaml --checkpoint runs/x/seed0/best --count 8
    mcl ablate    --config exp.yaml
    mcl selftest

Values from ``--config`` are overridden by ``--set section.key=value`` and
then by the dedicated flags. Exit status is 0 on success, 1 when a check
fails and 2 for invalid input.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import autograd as ag
from .checkpoint import load_model, load_tensors, save_model
from .complexity import analyze_mcl, analyze_vector, compare_reference, reports_csv
from .config import ConfigError, ExperimentConfig, set_override
from .data import DatasetError
from .export import export_feature
from .model import MclModel, VectorModel, init_hosvd, init_pca, init_random
from .selftest import run_all
from .study import desk_splits, run_directional_study, write_study
from .tensor import ShapeError
from .training import evaluate, pretrain_oracle, train_model

logger = logging.getLogger("mcl")


class UsageError(Exception):
    pass


# -- configuration -------------------------------------------------------------

def _load_config(args) -> ExperimentConfig:
    raw = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise UsageError(f"config file {path} not found")
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    for item in args.set or ():
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        set_override(raw, key.strip(), value)
    if args.seed is not None:
        set_override(raw, "train.seeds", f"[{args.seed}]")
    if args.profile is not None:
        set_override(raw, "train.profile", args.profile)
    if args.out is not None:
        raw["out"] = args.out
    return ExperimentConfig.from_dict(raw)


def _write(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _dump_json(path: Path, obj) -> Path:
    return _write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _timing_csv(seconds) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("epoch", "seconds"))
    for epoch, s in enumerate(seconds):
        w.writerow((epoch, f"{s:.3f}"))
    return buf.getvalue()


def _aggregate(values) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    return {"mean": float(arr.mean()), "std": float(arr.std()), "values": [float(v) for v in arr]}


# -- model preparation -----------------------------------------------------------

def _classifier_source(cfg: ExperimentConfig, seed: int) -> str:
    return cfg.init.classifier.replace("{seed}", str(seed))


def _prepare(cfg: ExperimentConfig, seed: int, train, val, test, seed_dir: Path):
    """Build and initialize the model of one seed; may pretrain the oracle."""
    model = cfg.build_model(seed)
    init_random(model, seed)
    if isinstance(model, MclModel) and cfg.init.cs_fs == "hosvd":
        init_hosvd(model, train.samples, seed)
    elif isinstance(model, VectorModel) and cfg.init.cs_fs == "pca":
        init_pca(model, train.samples)
    source = _classifier_source(cfg, seed)
    if cfg.framework == "oracle" or source == "random":
        return model
    if source == "pretrain":
        oracle, rec = pretrain_oracle(train, val, cfg.train_config(seed), cfg.classifier_spec(), test)
        save_model(oracle, seed_dir / "oracle", {"seed": seed, "best_epoch": rec.best_epoch})
        _write(seed_dir / "oracle_metrics.csv", rec.metrics_csv())
        model.load_classifier(oracle.params)
    else:
        tensors, _ = load_tensors(source)
        model.load_classifier(tensors)
    return model


# -- commands ------------------------------------------------------------------------

def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out)
    if cfg.framework == "mcl":
        report = analyze_mcl(cfg.dataset.extents, cfg.measurements, cfg.model.shared_weights)
    elif cfg.framework == "vector":
        report = analyze_vector(cfg.dataset.extents, cfg.measurements[0])
    else:
        raise UsageError("analyze needs the mcl or vector framework")
    text = reports_csv([report])
    _write(out / "complexity.csv", text)
    sys.stdout.write(text)
    if args.reference:
        rows = compare_reference()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({**r, "extents": "x".join(map(str, r["extents"]))})
        _write(out / "reference.csv", buf.getvalue())
        bad = [r for r in rows if r["match"] == r["flagged"]]
        print(f"reference tables: {len(rows)} cells, {sum(r['flagged'] for r in rows)} known misprints, "
              f"{len(bad)} unexplained mismatches")
        return 1 if bad else 0
    return 0


def cmd_init(args) -> int:
    cfg = _load_config(args)
    train, val, test = cfg.splits()
    out = Path(cfg.out)
    for seed in cfg.train.seeds:
        seed_dir = out / f"seed{seed}"
        model = _prepare(cfg, seed, train, val, test, seed_dir)
        save_model(model, seed_dir / "init", {"seed": seed})
        print(f"seed {seed}: initial checkpoint in {seed_dir / 'init'}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    train, val, test = cfg.splits()
    out = Path(cfg.out)
    accs = []
    for seed in cfg.train.seeds:
        seed_dir = out / f"seed{seed}"
        model, rec = pretrain_oracle(train, val, cfg.train_config(seed), cfg.classifier_spec(), test)
        save_model(model, seed_dir / "oracle", {"seed": seed, "best_epoch": rec.best_epoch})
        _write(seed_dir / "oracle_metrics.csv", rec.metrics_csv())
        accs.append(rec.test_acc)
        print(f"seed {seed}: oracle test_acc {rec.test_acc:.4f} (best epoch {rec.best_epoch})")
    _dump_json(out / "pretrain_summary.json", {"test_acc": _aggregate(accs)})
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train, val, test = cfg.splits()
    out = Path(cfg.out)
    _dump_json(out / "config.json", cfg.to_dict())
    per_seed = {}
    for seed in cfg.train.seeds:
        seed_dir = out / f"seed{seed}"
        model = _prepare(cfg, seed, train, val, test, seed_dir)
        tcfg = cfg.train_config(seed)

        def on_best(m, epoch, seed=seed, seed_dir=seed_dir):
            save_model(m, seed_dir / "best", {"seed": seed, "best_epoch": epoch})

        rec = train_model(model, train, val, tcfg, test, on_best)
        _write(seed_dir / "metrics.csv", rec.metrics_csv())
        _write(seed_dir / "timing.csv", _timing_csv(rec.wall_seconds))
        _dump_json(seed_dir / "record.json", rec.summary())
        per_seed[str(seed)] = rec.summary()
        print(f"seed {seed}: test_acc {rec.test_acc:.4f} val_acc {rec.checkpoint_val_acc:.4f} "
              f"(best epoch {rec.best_epoch})")
    summary = {"framework": cfg.framework, "seeds": per_seed,
               "test_acc": _aggregate([r["test_acc"] for r in per_seed.values()]),
               "val_acc": _aggregate([r["checkpoint_val_acc"] for r in per_seed.values()])}
    _dump_json(out / "summary.json", summary)
    t = summary["test_acc"]
    print(f"test accuracy {t['mean']:.4f} +- {t['std']:.4f} over {len(per_seed)} seed(s)")
    return 0


def _split(cfg: ExperimentConfig, name: str):
    train, val, test = cfg.splits()
    return {"train": train, "val": val, "test": test}[name]


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    model = load_model(args.checkpoint)
    data = _split(cfg, args.split)
    if data.sample_shape != model.input_shape:
        raise ShapeError(f"checkpoint expects samples of shape {model.input_shape}, "
                         f"dataset has {data.sample_shape}")
    loss, acc = evaluate(model, data)
    report = {"checkpoint": str(args.checkpoint), "split": args.split, "count": len(data),
              "loss": loss, "acc": acc}
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_export_features(args) -> int:
    cfg = _load_config(args)
    model = load_model(args.checkpoint)
    data = _split(cfg, args.split)
    if args.count < 1:
        raise UsageError("--count must be positive")
    samples = data.samples[:args.count]
    feats = model.features(samples)
    out = Path(args.dest or Path(cfg.out) / "features")
    for i, f in enumerate(feats):
        export_feature(out, f"feature_{i:04d}", f)
    print(f"wrote {len(feats)} feature tensors of shape {feats.shape[1:]} to {out}")
    return 0


def cmd_selftest(args) -> int:
    if args.corrupt_gradient:
        ag._MODE_GRAD_SCALE = 2.0
    try:
        checks = run_all(seed=args.check_seed)
    finally:
        ag._MODE_GRAD_SCALE = 1.0
    failed = [c for c in checks if not c.passed]
    for c in checks:
        if c.suite != "reference" or not c.passed:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.suite:<10} {c.name}: {c.value:.3e} {c.detail}")
    ref = [c for c in checks if c.suite == "reference"]
    print(f"reference tables: {sum(c.passed for c in ref)}/{len(ref)} cells consistent")
    worst = max(c.value for c in checks if c.suite == "gradient")
    print(f"worst gradient-check relative error: {worst:.3e}")
    print(f"selftest: {'FAILED' if failed else 'passed'} ({len(checks) - len(failed)}/{len(checks)})")
    return 1 if failed else 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    d = cfg.dataset
    splits = desk_splits(d.path if d.kind == "cifar10" else None, d.train_count, d.val_count,
                         d.test_count, d.seed)
    result = run_directional_study(splits, cfg.train.seeds, cfg.train_config(cfg.train.seeds[0]),
                                   progress=lambda n, s, a: print(f"{n} seed {s}: test_acc {a:.4f}",
                                                                  flush=True))
    path = write_study(result, cfg.out)
    for c in result.claims():
        print(f"({c['claim']}) {c['left']} {c['left_mean']:.4f} >= {c['right']} {c['right_mean']:.4f}: "
              f"{'holds' if c['holds'] else 'does not hold'}")
    print(f"study written to {path}")
    return 0


# -- argument parsing --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcl", description="Multilinear compressive learning experiments")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML experiment file")
        p.add_argument("--seed", type=int, help="run a single seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--profile", choices=("paper", "desk"), help="training schedule preset")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config entry, e.g. train.epochs=5")
        return p

    p = common(sub.add_parser("analyze", help="parameter, FLOP and memory counts"))
    p.add_argument("--reference", action="store_true", help="also compare against the printed tables")
    p.set_defaults(func=cmd_analyze)
    common(sub.add_parser("init", help="write initialized checkpoints")).set_defaults(func=cmd_init)
    common(sub.add_parser("pretrain", help="train the classifier on uncompressed signals")
           ).set_defaults(func=cmd_pretrain)
    common(sub.add_parser("train", help="train end to end for every seed")).set_defaults(func=cmd_train)

    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.set_defaults(func=cmd_eval)

    p = common(sub.add_parser("export-features", help="write synthesized features as PPM/PGM"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--count", type=int, default=8)
    p.add_argument("--dest", help="image directory (default: <out>/features)")
    p.set_defaults(func=cmd_export_features)

    p = sub.add_parser("selftest", help="run the invariant suites")
    p.add_argument("--check-seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_selftest)

    common(sub.add_parser("ablate", help="directional study over seeds")).set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ShapeError, DatasetError, FileNotFoundError, ValueError) as exc:
        print(f"mcl {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
