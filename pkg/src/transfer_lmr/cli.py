"""Command-line interface: gen-data, train, eval, compare, bench-latency.

Exit codes: 0 ok, 1 invalid config/spec, 2 I/O failure, 3 dimension mismatch.
Errors go to stderr as ``error: <id>: <message>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import yaml

from .bench import bench_latency
from .config import ConfigError, ExperimentConfig, load_config
from .core import DatasetError, DimensionError, load_dataset, save_dataset
from .metrics import MetricsReport
from .model import CheckpointError, checkpoint_bytes, load_checkpoint, save_checkpoint
from .pipeline import (DimensionMismatch, TrainedModel, evaluate_model, run_experiment,
                       train_crt, train_stage1, train_stage2_lmr)
from .synthgen import SynthSpec, generate, make_hdd_like, make_meteor_like

EXIT_CONFIG, EXIT_IO, EXIT_DIMS = 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, error_id: str, message: str):
        super().__init__(message)
        self.code = code
        self.error_id = error_id


def _common(p):
    p.add_argument("--config", help="YAML experiment config")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="config override, e.g. stage2.lr=0.01 (repeatable)")
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transfer-lmr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write synthetic train/test datasets")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="YAML file with SynthSpec fields")
    src.add_argument("--meteor-like", action="store_true")
    src.add_argument("--hdd-like", action="store_true")
    p.add_argument("--scale", type=int, default=10, help="count divisor")
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--mean-scale", type=float, default=1.0)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--test-multiplier", type=float, default=None,
                   help="test counts = ceil(train counts * m) instead of balanced")

    p = sub.add_parser("train", help="train CE, cRT or Transfer-LMR")
    _common(p)
    p.add_argument("--method", choices=("ce", "crt", "tlmr"), required=True)
    p.add_argument("--train", help="training dataset (else data.train_path)")
    p.add_argument("--from-stage1", help="stage-1 checkpoint to fine-tune instead of retraining")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("compare", help="CE vs cRT vs Transfer-LMR over several seeds")
    _common(p)

    p = sub.add_parser("bench-latency", help="time aggregate -> refine -> classify")
    _common(p)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--dim", type=int, default=2048)
    p.add_argument("--steps", type=int, default=7)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--iterations", type=int, default=100)
    return parser


def _say(args, *msg):
    if not args.quiet:
        print(*msg)


def _config(args) -> ExperimentConfig:
    overrides = list(args.override)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    try:
        return load_config(args.config, overrides)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, "io_error", str(exc)) from None
    except (ConfigError, yaml.YAMLError) as exc:
        raise CliError(EXIT_CONFIG, "bad_config", str(exc)) from None


def _echo_config(cfg: ExperimentConfig, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(cfg.to_yaml())


def _load(path, what="dataset"):
    try:
        return load_dataset(path)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        raise CliError(EXIT_IO, "io_error", f"{what}: {exc}") from None
    except DatasetError as exc:
        raise CliError(EXIT_CONFIG, exc.error_id, str(exc)) from None


def _write_jsonl(path: Path, records):
    path.write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    try:
        if args.spec:
            fields = yaml.safe_load(Path(args.spec).read_text()) or {}
            if args.seed is not None:
                fields["seed"] = args.seed
            spec = SynthSpec(**fields)
        else:
            maker = make_meteor_like if args.meteor_like else make_hdd_like
            kw = dict(D=args.dim, T=args.steps, seed=args.seed or 0, alpha=args.alpha,
                      sigma=args.sigma, scale=args.mean_scale, test_per_class=args.test_per_class)
            spec = maker(args.scale, **kw)
            if args.test_multiplier is not None:
                kw["test_counts"] = tuple(math.ceil(n * args.test_multiplier) for n in spec.counts)
                spec = maker(args.scale, **kw)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, "io_error", str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, "bad_spec", str(exc)) from None
    train, test = generate(spec)
    prov = {"generator": "transfer_lmr.synthgen", "spec": spec.to_dict()}
    try:
        save_dataset(train, out / "train.ftlm", {**prov, "split": "train"})
        save_dataset(test, out / "test.ftlm", {**prov, "split": "test"})
        (out / "synth_spec.yaml").write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False))
    except OSError as exc:
        raise CliError(EXIT_IO, "io_error", str(exc)) from None
    _say(args, f"{'class':<8}{'train':>8}{'test':>8}")
    for name, a, b in zip(spec.class_names, train.class_counts, test.class_counts):
        _say(args, f"{name:<8}{a:>8}{b:>8}")
    return 0


def _stage1_from(args, cfg, train) -> TrainedModel:
    if not args.from_stage1:
        return train_stage1(cfg, train)
    try:
        params = load_checkpoint(args.from_stage1)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, "io_error", str(exc)) from None
    except CheckpointError as exc:
        raise CliError(EXIT_CONFIG, exc.error_id, str(exc)) from None
    return TrainedModel(params, "checkpoint:" + str(args.from_stage1), [])


def cmd_train(args) -> int:
    cfg = _config(args)
    path = args.train or cfg.data.train_path
    if not path:
        raise CliError(EXIT_CONFIG, "bad_config", "no training dataset: pass --train or data.train_path")
    train = _load(path)
    out = Path(args.out)
    _echo_config(cfg, out)
    stage1 = _stage1_from(args, cfg, train)
    if args.method == "ce":
        model = stage1
    else:
        (out / "stage2_init.ckpt").write_bytes(checkpoint_bytes(stage1.params))
        fit = train_crt if args.method == "crt" else train_stage2_lmr
        model = fit(stage1, cfg, train)
        if not args.from_stage1:
            save_checkpoint(stage1.params, out / "stage1.ckpt")
    save_checkpoint(model.params, out / f"{args.method}.ckpt")
    _write_jsonl(out / f"{args.method}_log.jsonl", model.log)
    last = model.log[-1] if model.log else {}
    _say(args, f"{args.method}: wrote {out / (args.method + '.ckpt')}"
         + (f" (final loss {last['loss']:.4f})" if last else ""))
    return 0


def _print_row(args, rep: MetricsReport, label: str):
    row = rep.table_row()
    _say(args, " | ".join([f"{'method':<14}"] + [f"{k:>12}" for k in row]))
    _say(args, " | ".join([f"{label:<14}"] + [f"{'-' if v is None else f'{v:.1f}':>12}" for v in row.values()]))


def cmd_eval(args) -> int:
    ds = _load(args.dataset)
    try:
        params = load_checkpoint(args.checkpoint)
    except FileNotFoundError as exc:
        raise CliError(EXIT_IO, "io_error", str(exc)) from None
    except CheckpointError as exc:
        raise CliError(EXIT_CONFIG, exc.error_id, str(exc)) from None
    rep = evaluate_model(params, ds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(rep.to_json())
    (out / "metrics.csv").write_text(rep.to_csv())
    _print_row(args, rep, Path(args.checkpoint).stem)
    return 0


def cmd_compare(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    _echo_config(cfg, out)
    report = run_experiment(cfg)
    (out / "comparison.json").write_text(report.to_json())
    (out / "comparison.csv").write_text(report.table_csv())
    (out / "plot_data.csv").write_text(report.plot_csv())
    _write_jsonl(out / "stage_logs.jsonl", report.stage_logs())
    rows = report.table()
    cols = list(rows[0])
    _say(args, " | ".join(f"{c:>12}" for c in cols))
    for r in rows:
        _say(args, " | ".join(f"{r[c]:>12}" for c in cols))
    return 0


def cmd_bench_latency(args) -> int:
    try:
        res = bench_latency(args.batch, args.dim, args.steps, args.classes, args.iterations,
                            seed=args.seed or 0)
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "bad_config", str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "latency.json").write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    _say(args, f"B={res['batch']} D={res['dim']} T={res['steps']}: "
               f"median {res['median_ms_per_sample']:.4f} ms/sample, p95 {res['p95_ms_per_sample']:.4f} ms/sample")
    return 0


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval,
            "compare": cmd_compare, "bench-latency": cmd_bench_latency}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"error: {exc.error_id}: {exc}", file=sys.stderr)
        return exc.code
    except (DimensionMismatch, DimensionError) as exc:
        print(f"error: dimension_mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMS
    except OSError as exc:
        print(f"error: io_error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
