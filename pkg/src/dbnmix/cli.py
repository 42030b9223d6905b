"""Command-line interface: synth, train, eval, sweep, export-boundary,
reproduce-fig1.

A flat key=value config file can seed any training flags; explicit CLI
flags win. `--gamma inf` selects exact class-balanced re-sampling.
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace

import numpy as np

from .datasets import (Dataset, LongTailSpec, load_dataset, make_gaussian_longtail,
                       make_half_moons, save_dataset)
from .errors import ConfigError, DbnMixError
from .evaluate import (EVAL_MODES, evaluate, export_boundary, save_boundary_csv,
                       save_grouped_accuracy_csv)
from .model import load_checkpoint, save_checkpoint
from .train import TrainConfig, save_sweep_csv, sweep, train_run

FIG1_METHODS = ("erm", "mixup", "sbn-mix")


def parse_gamma(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    try:
        value = float(text)
    except ValueError as exc:
        raise ConfigError(f"bad gamma {text!r}") from exc
    return value


def parse_int_list(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def parse_float_list(text: str) -> list[float]:
    return [parse_gamma(v) for v in text.split(",")]


# config-file key -> (TrainConfig field, parser)
TRAIN_KEYS = {
    "method": ("method", str),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "lr": ("learning_rate", float),
    "momentum": ("momentum", float),
    "weight_decay": ("weight_decay", float),
    "decay_epochs": ("decay_epochs", parse_int_list),
    "decay_factor": ("decay_factor", float),
    "alpha": ("alpha", float),
    "gamma": ("gamma", parse_gamma),
    "eta": ("eta", float),
    "epsilon": ("epsilon", float),
    "hidden": ("hidden", parse_int_list),
    "head_hidden": ("head_hidden", parse_int_list),
    "seed": ("seed", int),
    "drop_last": ("drop_last", parse_bool),
    "per_example_lambda": ("per_example_lambda", parse_bool),
    "bilateral_mixup": ("bilateral_mixup", parse_bool),
    "temperature_scaling": ("temperature_scaling", parse_bool),
}


def read_config_file(path: str) -> dict:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}: line {lineno}: expected key=value")
            key, raw = (part.strip() for part in line.split("=", 1))
            if key not in TRAIN_KEYS:
                raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
            field, conv = TRAIN_KEYS[key]
            values[field] = conv(raw)
    return values


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--method", choices=("erm", "mixup", "sbn-mix", "dbn", "dbn-mix"))
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--lr", type=float)
    parser.add_argument("--momentum", type=float)
    parser.add_argument("--weight-decay", type=float)
    parser.add_argument("--decay-epochs", type=parse_int_list)
    parser.add_argument("--decay-factor", type=float)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--gamma", type=parse_gamma)
    parser.add_argument("--eta", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--hidden", type=parse_int_list)
    parser.add_argument("--head-hidden", type=parse_int_list)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--drop-last", action=argparse.BooleanOptionalAction)
    parser.add_argument("--per-example-lambda", action=argparse.BooleanOptionalAction)
    parser.add_argument("--bilateral-mixup", action=argparse.BooleanOptionalAction)
    parser.add_argument("--temperature-scaling", action=argparse.BooleanOptionalAction)
    parser.add_argument("--config", help="flat key=value file; CLI flags override")


def build_train_config(args: argparse.Namespace) -> TrainConfig:
    values = read_config_file(args.config) if args.config else {}
    for field, _ in TRAIN_KEYS.values():
        cli_value = getattr(args, field if field != "learning_rate" else "lr", None)
        if cli_value is not None:
            values[field] = cli_value
    return TrainConfig(**values)


def dataset_ext(fmt: str) -> str:
    return ".bin" if fmt == "binary" else ".csv"


def detect_format(path: str, fmt: str | None) -> str:
    if fmt:
        return fmt
    return "binary" if path.endswith(".bin") else "csv"


def load_pair(args) -> tuple[Dataset, Dataset]:
    if args.dataset:
        ext = dataset_ext(args.format or "csv")
        train_path = args.dataset + "_train" + ext
        test_path = args.dataset + "_test" + ext
    else:
        if not (args.train_file and args.test_file):
            raise ConfigError("provide --dataset PREFIX or both --train-file and --test-file")
        train_path, test_path = args.train_file, args.test_file
    fmt_train = detect_format(train_path, args.format)
    fmt_test = detect_format(test_path, args.format)
    train = load_dataset(train_path, fmt_train)
    test = load_dataset(test_path, fmt_test, num_classes=train.num_classes)
    return train, test


def cmd_synth(args) -> int:
    fmt = args.format
    if args.kind == "moons":
        train = make_half_moons(args.n_majority, args.ratio, args.noise_sd, args.seed)
        test = make_half_moons(args.test_per_class, 1.0, args.noise_sd, args.seed + 1)
    else:
        spec = LongTailSpec(num_classes=args.classes, n_max=args.n_max,
                            imbalance_ratio=args.ratio)
        train = make_gaussian_longtail(spec, args.dim, args.class_sep, args.seed)
        balanced = LongTailSpec(num_classes=args.classes, n_max=args.test_per_class,
                                imbalance_ratio=1.0)
        test = make_gaussian_longtail(balanced, args.dim, args.class_sep, args.seed + 1)
    ext = dataset_ext(fmt)
    save_dataset(train, args.out + "_train" + ext, fmt)
    save_dataset(test, args.out + "_test" + ext, fmt)
    print(f"wrote {args.out}_train{ext} (counts {train.class_counts.tolist()}) "
          f"and {args.out}_test{ext} (counts {test.class_counts.tolist()})")
    return 0


def cmd_train(args) -> int:
    config = build_train_config(args)
    train_ds, test_ds = load_pair(args)
    record, model = train_run(config, train_ds, test_ds)
    final = record.final
    print(f"method={config.method} seed={config.seed} "
          f"accuracy all={final.all:.4f} many={final.many:.4f} "
          f"medium={final.medium:.4f} few={final.few:.4f}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        record.write_csv(os.path.join(args.out, "record.csv"))
        record.write_summary(os.path.join(args.out, "summary.json"))
        save_checkpoint(model, os.path.join(args.out, "model.ckpt"),
                        extra_config=record.config)
        print(f"wrote record.csv, summary.json, model.ckpt to {args.out}")
    return 0


def cmd_eval(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    fmt = detect_format(args.test_file, args.format)
    test = load_dataset(args.test_file, fmt, num_classes=model.num_classes)
    groups = None
    if args.groups_from:
        train = load_dataset(args.groups_from, detect_format(args.groups_from, args.format),
                             num_classes=model.num_classes)
        groups = train.group_of_class
    acc = evaluate(model, test, mode=args.mode, group_of_class=groups)
    print(f"mode={args.mode} all={acc.all:.4f} many={acc.many:.4f} "
          f"medium={acc.medium:.4f} few={acc.few:.4f}")
    if args.out:
        save_grouped_accuracy_csv(acc, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_export_boundary(args) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    fmt = detect_format(args.data, args.format)
    dataset = load_dataset(args.data, fmt, num_classes=model.num_classes)
    grid = export_boundary(model, dataset, args.resolution, margin=args.margin)
    save_boundary_csv(grid, args.out)
    print(f"wrote {args.out} ({args.resolution}x{args.resolution})")
    return 0


def cmd_sweep(args) -> int:
    config = build_train_config(args)
    train_ds, test_ds = load_pair(args)
    grid = {}
    if args.sweep_eta:
        grid["eta"] = args.sweep_eta
    if args.sweep_epsilon:
        grid["epsilon"] = args.sweep_epsilon
    if args.sweep_alpha:
        grid["alpha"] = args.sweep_alpha
    if args.sweep_gamma:
        grid["gamma"] = args.sweep_gamma
    rows = sweep(config, grid, train_ds, test_ds, jobs=args.jobs)
    save_sweep_csv(rows, args.out)
    failed = sum(1 for r in rows if r["error"])
    print(f"wrote {args.out}: {len(rows)} cells, {failed} failed")
    return 0


def fig1_train_config(method: str, seed: int, epochs: int) -> TrainConfig:
    """Three-layer networks on the imbalanced half-moons; the bilateral-mixup
    panel is the single-branch mix with temperature scaling left off so the
    comparison isolates the augmentation."""
    decay = tuple(sorted({e for e in (int(epochs * 0.6), int(epochs * 0.8))
                          if 0 < e < epochs}))
    base = TrainConfig(method=method, epochs=epochs, batch_size=128,
                       learning_rate=0.1, momentum=0.9, weight_decay=2e-4,
                       decay_epochs=decay, alpha=1.0, gamma=math.inf,
                       hidden=(64, 64), seed=seed)
    if method == "sbn-mix":
        base = replace(base, temperature_scaling=False)
    return base


def reproduce_fig1(output_dir: str, seeds: list[int], epochs: int = 120,
                   noise_sd: float = 0.15, resolution: int = 120,
                   n_majority: int = 1000, imbalance_ratio: float = 100.0,
                   test_per_class: int = 500) -> list[dict]:
    """Train ERM / classic mixup / bilateral mixup on half-moons (imbalance
    ratio 100) per seed; export one boundary grid per run plus a recall
    summary. Returns the summary rows."""
    os.makedirs(output_dir, exist_ok=True)
    rows = []
    for seed in seeds:
        train = make_half_moons(n_majority, imbalance_ratio, noise_sd, seed)
        test = make_half_moons(test_per_class, 1.0, noise_sd, seed + 1)
        save_dataset(train, os.path.join(output_dir, f"points_seed{seed}.csv"), "csv")
        for method in FIG1_METHODS:
            config = fig1_train_config(method, seed, epochs)
            record, model = train_run(config, train, test)
            acc = record.final
            grid = export_boundary(model, train, resolution)
            save_boundary_csv(grid, os.path.join(
                output_dir, f"boundary_{method}_seed{seed}.csv"))
            rows.append({
                "method": method,
                "seed": seed,
                "majority_recall": float(acc.per_class[0]),
                "minority_recall": float(acc.per_class[1]),
            })
    with open(os.path.join(output_dir, "summary.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["method", "seed", "majority_recall", "minority_recall"])
        writer.writeheader()
        writer.writerows(rows)
    return rows


def cmd_reproduce_fig1(args) -> int:
    seeds = [int(v) for v in args.seeds.split(",")]
    rows = reproduce_fig1(args.out, seeds, epochs=args.epochs,
                          noise_sd=args.noise_sd, resolution=args.resolution)
    for method in FIG1_METHODS:
        recalls = [r["minority_recall"] for r in rows if r["method"] == method]
        print(f"{method}: mean minority recall {np.mean(recalls):.3f} "
              f"over {len(recalls)} seeds")
    print(f"wrote {3 * len(seeds)} boundary grids and summary.csv to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dbnmix",
        description="Dual-branch training with bilateral mixup and class-wise "
                    "temperature scaling, on synthetic long-tailed datasets.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a long-tailed train/test pair")
    p.add_argument("--kind", choices=("moons", "blobs"), required=True)
    p.add_argument("--n-majority", type=int, default=1000)
    p.add_argument("--ratio", type=float, default=100.0)
    p.add_argument("--noise-sd", type=float, default=0.15)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--n-max", type=int, default=500)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--class-sep", type=float, default=2.5)
    p.add_argument("--test-per-class", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("csv", "binary"), default="csv")
    p.add_argument("--out", required=True, help="output path prefix")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model and report accuracy")
    add_train_flags(p)
    p.add_argument("--dataset", help="prefix written by synth")
    p.add_argument("--train-file")
    p.add_argument("--test-file")
    p.add_argument("--format", choices=("csv", "binary"))
    p.add_argument("--out", help="directory for record.csv/summary.json/model.ckpt")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--test-file", required=True)
    p.add_argument("--groups-from", help="training file defining Many/Medium/Few")
    p.add_argument("--mode", choices=EVAL_MODES, default="fused")
    p.add_argument("--format", choices=("csv", "binary"))
    p.add_argument("--out", help="write per-class and group accuracies as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep over eta/epsilon/alpha/gamma")
    add_train_flags(p)
    p.add_argument("--dataset")
    p.add_argument("--train-file")
    p.add_argument("--test-file")
    p.add_argument("--format", choices=("csv", "binary"))
    p.add_argument("--sweep-eta", type=parse_float_list)
    p.add_argument("--sweep-epsilon", type=parse_float_list)
    p.add_argument("--sweep-alpha", type=parse_float_list)
    p.add_argument("--sweep-gamma", type=parse_float_list)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-boundary", help="fused decision grid as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="2-d dataset for the bounding box")
    p.add_argument("--resolution", type=int, default=200)
    p.add_argument("--margin", type=float, default=0.5)
    p.add_argument("--format", choices=("csv", "binary"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_boundary)

    p = sub.add_parser("reproduce-fig1",
                       help="half-moons toy study: ERM vs mixup vs bilateral mixup")
    p.add_argument("--out", required=True)
    p.add_argument("--seeds", default="0,1,2,3,4,5,6,7,8,9")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--noise-sd", type=float, default=0.15)
    p.add_argument("--resolution", type=int, default=120)
    p.set_defaults(func=cmd_reproduce_fig1)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except DbnMixError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
