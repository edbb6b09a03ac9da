"""Command-line entry point: ``linrecover {gen,select,fit,bench,report}``.

Exit codes: 0 ok, 1 I/O error, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from .bench import emit_report, load_config, run_experiment, split_rows
from .csvio import CsvFormatError, format_float, load_csv, write_csv
from .matrix import center_columns, variance_explained
from .neuralnet import TrainConfig, TrainingDivergedError
from .rlc import SDE_TRAIN_CONFIG, fit_fsca_rlc, fit_fsca_sde, fit_pca_rlc, rlc_reconstruct, sde_reconstruct
from .selection import select
from .synth import SynthConfig, generate_xsynthetic

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_threads() -> int:
    env = os.environ.get("LINRECOVER_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"LINRECOVER_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise UsageError("LINRECOVER_THREADS must be >= 1")
        return n
    return os.cpu_count() or 1


def _write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def cmd_gen(args) -> int:
    try:
        cfg = SynthConfig(m=args.m, v=args.v, sigma2=args.sigma2, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    X = generate_xsynthetic(cfg)
    header = [f"x{j + 1}" for j in range(cfg.v)]
    write_csv(X, args.out, header=header)
    print(f"wrote {cfg.m}x{cfg.v} matrix to {args.out}")
    return EXIT_OK


def cmd_select(args) -> int:
    X = load_csv(args.input)
    if not 1 <= args.k <= X.shape[1]:
        raise UsageError(f"--k must be in [1, {X.shape[1]}]")
    Xc, _ = center_columns(X)
    model = select(Xc, args.k, args.method, args.max_passes)
    doc = {
        "method": model.method,
        "k": model.k,
        "indices": list(model.indices),
        "vex_profile": [float(format_float(x)) for x in model.vex_profile],
        "passes": model.passes,
    }
    _write_json(doc, args.out)
    print(f"{model.method} k={model.k} indices={list(model.indices)} vex={format_float(model.vex)}")
    return EXIT_OK


def _parse_hidden(text: str) -> list[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"--hidden must be a comma-separated list of integers, got {text!r}") from None
    if not sizes or any(s < 1 for s in sizes):
        raise UsageError("--hidden sizes must be positive")
    return sizes


def cmd_fit(args) -> int:
    X = load_csv(args.input)
    try:
        tr, va, te = split_rows(X.shape[0], args.train_fraction, args.val_fraction, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    fit_rows = np.concatenate([tr, va])
    X_fit, X_test = X[fit_rows], X[te]
    val_pos = np.arange(tr.size, fit_rows.size)
    if not 1 <= args.k <= X.shape[1]:
        raise UsageError(f"--k must be in [1, {X.shape[1]}]")
    if args.epochs < 0:
        raise UsageError("--epochs must be >= 0")
    train_on = args.epochs > 0

    if args.model == "fsca-sde":
        hidden = _parse_hidden(args.hidden or "11,21")
        base = SDE_TRAIN_CONFIG
        cfg = dataclasses.replace(base, seed=args.seed, max_epochs=args.epochs or base.max_epochs)
        model = fit_fsca_sde(X_fit, args.k, hidden, cfg, val_index=val_pos, fine_tune=train_on)
        recon = sde_reconstruct
    else:
        hidden = _parse_hidden(args.hidden or "6")
        if len(hidden) != 1:
            raise UsageError("RLC models take a single --hidden size")
        if not 0.0 < args.tau <= 100.0:
            raise UsageError("--tau must be in (0, 100]")
        cfg = TrainConfig(seed=args.seed, max_epochs=args.epochs or 1)
        fit = fit_fsca_rlc if args.model == "fsca-rlc" else fit_pca_rlc
        model = fit(X_fit, args.k, args.tau, hidden[0], cfg, val_index=val_pos, train_network=train_on)
        recon = rlc_reconstruct

    mu = X_fit.mean(axis=0)
    vex_train = variance_explained(X_fit - mu, recon(model, X_fit) - mu)
    vex_test = variance_explained(X_test - mu, recon(model, X_test) - mu)
    doc = model.to_dict()
    doc["metrics"] = {"vex_train": float(format_float(vex_train)), "vex_test": float(format_float(vex_test))}
    _write_json(doc, args.out)
    extra = f" k_lin={model.k_lin} k_bar={model.k_bar}" if args.model != "fsca-sde" else ""
    print(f"{args.model} k={args.k}{extra} vex_train={format_float(vex_train)} vex_test={format_float(vex_test)}")
    return EXIT_OK


def cmd_bench(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ValueError, TypeError, KeyError) as exc:
        raise UsageError(f"invalid config {args.config}: {exc}") from None
    if args.no_timing:
        cfg = dataclasses.replace(cfg, record_timing=False)
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    report = run_experiment(cfg, threads=threads)
    paths = emit_report(report, args.out_dir, tuple(args.formats.split(",")))
    print(f"{len(report.rows)} fits, {len(report.failures)} failed; wrote {', '.join(p.name for p in paths)}")
    return EXIT_OK


def cmd_report(args) -> int:
    """Print the aggregate table of a finished bench run."""
    path = Path(args.input)
    if path.is_dir():
        path = path / "aggregate.json"
    doc = json.loads(path.read_text())
    print(f"dataset {doc['dataset']}, {doc['mc_runs']} runs")
    print(f"{'method':<10}{'k':>4}{'runs':>6}{'vex_mean':>12}{'vex_std':>10}{'time_ratio':>12}")
    for method, by_k in doc["results"].items():
        for k, e in by_k.items():
            ratio = "-" if e["time_ratio_vs_fsca"] is None else format_float(e["time_ratio_vs_fsca"], 4)
            mean = "-" if e["vex_mean"] is None else format_float(e["vex_mean"], 6)
            std = "-" if e["vex_std"] is None else format_float(e["vex_std"], 3)
            print(f"{method:<10}{k:>4}{e['n_runs']:>6}{mean:>12}{std:>10}{ratio:>12}")
    if doc["failures"]:
        print(f"{len(doc['failures'])} failed fits")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="linrecover", description="Variable selection and linear-component recovery toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate the synthetic benchmark dataset")
    g.add_argument("--m", type=int, default=500)
    g.add_argument("--v", type=int, default=50)
    g.add_argument("--sigma2", type=float, default=0.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("select", help="select k variables from a CSV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--method", choices=["fsca", "spbr", "mpbr"], default="fsca")
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--max-passes", type=int, default=100)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_select)

    f = sub.add_parser("fit", help="fit an RLC or SDE model and report V_EX")
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--model", choices=["fsca-rlc", "pca-rlc", "fsca-sde"], default="fsca-rlc")
    f.add_argument("--k", type=int, required=True)
    f.add_argument("--tau", type=float, default=99.0)
    f.add_argument("--hidden", help="hidden width (RLC) or comma list (SDE)")
    f.add_argument("--epochs", type=int, default=1000, help="epoch limit; 0 skips network training")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--train-fraction", type=float, default=70.0)
    f.add_argument("--val-fraction", type=float, default=20.0)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    b = sub.add_parser("bench", help="run a Monte Carlo benchmark from a JSON config")
    b.add_argument("--config", required=True)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--threads", type=int, default=None, help="worker threads (default: LINRECOVER_THREADS or CPU count)")
    b.add_argument("--formats", default="csv,json")
    b.add_argument("--no-timing", action="store_true", help="write zero fit times, for byte-stable reports")
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("report", help="print the aggregate table of a bench output")
    r.add_argument("--in", dest="input", required=True, help="bench output directory or aggregate.json")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CsvFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDivergedError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
