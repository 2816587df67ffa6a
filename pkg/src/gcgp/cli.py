"""Command-line entry point.

Exit codes:
    0  success (and, for the check subcommands, the check passed)
    1  a check subcommand ran but its tolerance was not met
    2  invalid input: bad flags, config keys, dataset files, or arguments
    3  numerical failure (kernel not factorizable, non-finite loss)

``GCGP_THREADS`` caps BLAS threads and the sweep worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_run_config, load_config_file
from .errors import NumericalError, ValidationError

log = logging.getLogger("gcgp")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so bad flags map to exit code 2."""

    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _thread_cap() -> int | None:
    raw = os.environ.get("GCGP_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"GCGP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ValidationError("GCGP_THREADS must be at least 1")
    return n


def _thread_limits(cap):
    if cap is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=cap)


def _default(v):
    return float(v) if isinstance(v, np.floating) else int(v) if isinstance(v, np.integer) else str(v)


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, default=_default))


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------- flags

S = argparse.SUPPRESS


def _add_condense_flags(p):
    g = p.add_argument_group("condensation")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--dataset", default=S, help="dataset directory")
    g.add_argument("--out", default=S, help="output directory")
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--per-class", dest="per_class", type=int, default=S)
    g.add_argument("--m", type=int, default=S, help="total condensed size (split evenly over classes)")
    g.add_argument("--k", type=int, default=S, help="propagation hops")
    g.add_argument("--beta", type=float, default=S)
    g.add_argument("--sigma-w2", dest="sigma_w2", type=float, default=S)
    g.add_argument("--feature-scale", dest="feature_scale", type=float, default=S)
    g.add_argument("--row-normalize-features", dest="row_normalize_features",
                   action=argparse.BooleanOptionalAction, default=S)
    g.add_argument("--kernel", choices=("arcsine", "dot"), default=S)
    g.add_argument("--learn-structure", dest="learn_structure",
                   action=argparse.BooleanOptionalAction, default=S)
    g.add_argument("--epochs", type=int, default=S)
    g.add_argument("--lr", dest="learning_rate", type=float, default=S)
    g.add_argument("--optimizer", choices=("adam", "sgd"), default=S)
    g.add_argument("--tau-start", dest="tau_start", type=float, default=S)
    g.add_argument("--tau-end", dest="tau_end", type=float, default=S)
    g.add_argument("--loss-rows", dest="loss_rows", choices=("train", "all-labeled"), default=S)
    g.add_argument("--batch-rows", dest="batch_rows", type=int, default=S)
    g.add_argument("--init", choices=("real", "gaussian"), default=S)
    g.add_argument("--freeze-labels", dest="freeze_labels", action="store_const", const=True, default=S)
    g.add_argument("--fixed-noise", dest="fixed_noise", action="store_const", const=True, default=S)
    g.add_argument("--logalpha-mean", dest="logalpha_mean", type=float, default=S)
    g.add_argument("--early-stop-window", dest="early_stop_window", type=int, default=S)
    g.add_argument("--seeds", default=S, help="comma-separated seeds for repeated runs")
    g.add_argument("--jobs", type=int, default=S, help="parallel sweep workers")
    g.add_argument("-v", "--verbose", dest="verbosity", action="count", default=S)


_NON_CONFIG = {"command", "config", "func", "condensed", "baseline", "size", "generalize", "ablation",
               "dot_hops", "split"}


def _run_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {k: v for k, v in vars(args).items() if k not in _NON_CONFIG}
    return build_run_config(file_values, flags)


def _load_graph(rc: RunConfig):
    from .io import load_dataset
    if not rc.dataset:
        raise ValidationError("no dataset given (use --dataset or 'dataset =' in the config file)")
    return load_dataset(rc.dataset)


def _out_dir(rc: RunConfig, fallback: str) -> Path:
    return Path(rc.out or fallback)


# ---------------------------------------------------------------- subcommands

def cmd_condense(args) -> int:
    from .evaluate import PUBLISHED, condense_and_evaluate
    from .io import save_condensed

    rc = _run_config(args)
    g = _load_graph(rc)
    cfg = rc.condense
    out = _out_dir(rc, "runs/condense")
    effective = rc.to_dict()
    cg, report, res = condense_and_evaluate(g, cfg, cfg.seed)
    save_condensed(out / "condensed.json", cg, effective)
    metrics = {"config": effective, "dataset": g.name, "m": cg.m, "seed": cfg.seed, **res.to_dict(),
               "published_not_recomputed": PUBLISHED.get((g.name, cg.m), {})}
    _write_json(out / "metrics.json", metrics)
    _write_json(out / "report.json", {**report.to_dict(), "config": effective})
    print(f"{g.name}: m={cg.m} steps={report.steps} loss={report.losses[-1] if report.losses else float('nan'):.6g} "
          f"test_acc={res.accuracy_mean:.4f} -> {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .evaluate import (PUBLISHED, ablation_kernels, aggregate, evaluate_gp, generalize_eval,
                           kcenter_baseline, random_baseline, run_seeds)
    from .io import load_condensed

    rc = _run_config(args)
    g = _load_graph(rc)
    cfg = rc.condense
    kcfg = cfg.kernel_config()
    out = _out_dir(rc, "runs/evaluate")
    effective = rc.to_dict()
    doc = {"config": effective, "dataset": g.name}

    if args.ablation:
        rows = ablation_kernels(g, cfg, rc.seeds, dot_hops=args.dot_hops)
        _write_csv(out / "ablation.csv", ["kernel", "k", "acc_mean", "acc_std"],
                   [[r["kernel"], r["k"], r["acc_mean"], r["acc_std"]] for r in rows])
        doc.update(rows=rows, published_not_recomputed=PUBLISHED.get((g.name, 70), {}))
        _write_json(out / "metrics.json", doc)
        for r in rows:
            print(f"{r['kernel']:<12} {100 * r['acc_mean']:.1f} +- {100 * r['acc_std']:.1f}")
        return EXIT_OK

    if args.condensed:
        cg, stored = load_condensed(args.condensed)
        doc["condensed_config"] = stored
        graphs = [cg]
    elif args.baseline:
        size = args.size or (cfg.m if cfg.m else cfg.per_class * g.num_classes)
        make = random_baseline if args.baseline == "random" else kcenter_baseline
        kw = {"k": cfg.k} if args.baseline == "kcenter" else {}
        graphs = [make(g, size, seed=s, row_normalize=cfg.row_normalize_features, **kw) for s in rc.seeds]
    else:
        res = run_seeds(g, cfg, rc.seeds)
        doc.update(method="gcgp", seeds=rc.seeds, **res.to_dict())
        _write_json(out / "metrics.json", doc)
        print(f"gcgp: {100 * res.accuracy_mean:.2f} +- {100 * res.accuracy_std:.2f} over seeds {rc.seeds}")
        return EXIT_OK

    if args.generalize:
        results = [generalize_eval(g, cg, kcfg, args.generalize) for cg in graphs]
    else:
        results = [evaluate_gp(g, cg, kcfg, kernel=cfg.kernel, split=args.split) for cg in graphs]
    res = aggregate(results)
    method = args.baseline or "condensed"
    doc.update(method=method, predictor=args.generalize or "gp", m=graphs[0].m, **res.to_dict(),
               published_not_recomputed=PUBLISHED.get((g.name, graphs[0].m), {}))
    _write_json(out / "metrics.json", doc)
    print(f"{method} ({args.generalize or 'gp'}): {100 * res.accuracy_mean:.2f} +- {100 * res.accuracy_std:.2f}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .evaluate import sweep

    rc = _run_config(args)
    g = _load_graph(rc)
    cap = _thread_cap()
    jobs = min(rc.jobs, cap) if cap else rc.jobs
    rows = sweep(g, rc.condense, rc.betas, rc.ks, rc.seeds, jobs=jobs)
    out = _out_dir(rc, "runs/sweep")
    _write_csv(out / "sweep.csv", ["beta", "k", "acc_mean", "acc_std"],
               [[r["beta"], r["k"], r["acc_mean"], r["acc_std"]] for r in rows])
    _write_json(out / "sweep.json", {"config": rc.to_dict(), "dataset": g.name, "cells": rows})
    for r in rows:
        print(f"beta={r['beta']:<8g} k={r['k']}  {100 * r['acc_mean']:.2f} +- {100 * r['acc_std']:.2f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import synthetic_graph, timing_bench
    from .kernels import KernelConfig

    g = synthetic_graph(args.n, args.d, seed=args.seed)
    cfg = KernelConfig(k=args.k, beta=args.beta)
    rep = timing_bench(g, args.sizes, cfg, repeats=args.repeats)
    out = Path(args.out)
    _write_csv(out / "timing.csv", ["m", "step_ms"], rep.rows())
    _write_json(out / "timing.json", {"config": vars_clean(args), **rep.to_dict()})
    for m, ms in rep.rows():
        print(f"m={m:<5d} {ms:9.2f} ms/step")
    print(f"log-log slope {rep.slope:.2f}; cost(m_max)/cost(m_min) = {rep.ratio_last_first:.1f}; "
          f"within cost model: {rep.within_model}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradients import finite_difference_check, random_instance

    targets, cg, cfg, noise, tau = random_instance(args.n, args.m, args.d, args.classes,
                                                   learn_structure=args.learn_structure,
                                                   seed=args.seed, beta=args.beta, k=args.k)
    rep = finite_difference_check(targets, cg, cfg, h=args.h, noise=noise, tau=tau, tol=args.tol,
                                  abs_floor=args.abs_floor, kernel=args.kernel)
    print(rep.summary())
    print(f"max relative error {rep.max_rel_err:.3e} (tolerance {args.tol:g})")
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_kernel_oracle(args) -> int:
    from .bench import kernel_oracle

    rep = kernel_oracle(args.dims, args.pairs, args.samples, seed=args.seed, tol=args.tol)
    print(f"max abs deviation {rep.max_abs_dev:.3e} over {args.pairs} pairs "
          f"({args.samples} samples each; tolerance {args.tol:g})")
    if args.out:
        _write_json(Path(args.out) / "kernel_oracle.json",
                    {"config": vars_clean(args), "max_abs_dev": rep.max_abs_dev, "deviations": rep.deviations})
    return EXIT_OK if rep.passed else EXIT_CHECK_FAILED


def cmd_convert(args) -> int:
    from .datasets import from_linqs, from_planetoid
    from .io import save_dataset

    if args.planetoid:
        g = from_planetoid(args.planetoid, args.name)
    else:
        if not (args.content and args.cites):
            raise ValidationError("give --planetoid DIR, or both --content and --cites")
        g = from_linqs(args.content, args.cites, args.name, seed=args.seed)
    save_dataset(g, args.out, compress=args.compress)
    print(f"{g.name}: n={g.num_nodes} d={g.num_features} C={g.num_classes} edges={g.num_edges} "
          f"train/val/test={g.train.size}/{g.val.size}/{g.test.size} -> {args.out}")
    return EXIT_OK


def vars_clean(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _int_list(s):
    try:
        return [int(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcgp", description="Graph condensation with a Gaussian-process objective.")
    p.add_argument("--version", action="version", version=f"gcgp {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("condense", help="condense a dataset and evaluate the result")
    _add_condense_flags(c)
    c.set_defaults(func=cmd_condense)

    e = sub.add_parser("evaluate", help="score a condensed graph, a baseline, or the kernel ablation")
    _add_condense_flags(e)
    mode = e.add_mutually_exclusive_group()
    mode.add_argument("--condensed", help="condensed-graph JSON to score")
    mode.add_argument("--baseline", choices=("random", "kcenter"))
    mode.add_argument("--ablation", action="store_true", help="arcsine vs dot-product condensation")
    e.add_argument("--size", type=int, help="baseline size (default: condensed size from the config)")
    e.add_argument("--generalize", choices=("krr", "sgc"), help="score with another predictor")
    e.add_argument("--split", default="test", choices=("train", "val", "test"))
    e.add_argument("--dot-hops", dest="dot_hops", type=int, default=0,
                   help="propagation hops for the ablation's dot-product arm")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("sweep", help="beta x k grid")
    _add_condense_flags(s)
    s.add_argument("--betas", default=S, help="comma-separated beta values")
    s.add_argument("--ks", default=S, help="comma-separated hop counts")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bench", help="per-step timing across condensed sizes")
    b.add_argument("--n", type=int, default=5000)
    b.add_argument("--d", type=int, default=64)
    b.add_argument("--k", type=int, default=2)
    b.add_argument("--beta", type=float, default=0.5)
    b.add_argument("--sizes", type=_int_list, default=[32, 64, 128, 256])
    b.add_argument("--repeats", type=int, default=7)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", default="runs/bench")
    b.set_defaults(func=cmd_bench)

    gc = sub.add_parser("gradcheck", help="analytic gradients vs central finite differences")
    gc.add_argument("--n", type=int, default=20)
    gc.add_argument("--m", type=int, default=6)
    gc.add_argument("--d", type=int, default=8)
    gc.add_argument("--classes", type=int, default=3)
    gc.add_argument("--k", type=int, default=2)
    gc.add_argument("--beta", type=float, default=0.5)
    gc.add_argument("--kernel", choices=("arcsine", "dot"), default="arcsine")
    gc.add_argument("--learn-structure", action="store_true")
    gc.add_argument("--h", type=float, default=1e-5)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.add_argument("--abs-floor", dest="abs_floor", type=float, default=1e-7,
                    help="absolute difference below which a coordinate passes regardless")
    gc.add_argument("--seed", type=int, default=0)
    gc.set_defaults(func=cmd_gradcheck)

    ko = sub.add_parser("kernel-oracle", help="arcsine kernel vs Monte-Carlo erf network")
    ko.add_argument("--dims", type=int, default=5)
    ko.add_argument("--pairs", type=int, default=50)
    ko.add_argument("--samples", type=int, default=1_000_000)
    ko.add_argument("--tol", type=float, default=3e-3)
    ko.add_argument("--seed", type=int, default=0)
    ko.add_argument("--out")
    ko.set_defaults(func=cmd_kernel_oracle)

    cv = sub.add_parser("convert", help="write a dataset directory from Planetoid or LINQS files")
    cv.add_argument("--planetoid", help="directory with ind.<name>.* files")
    cv.add_argument("--content", help="LINQS <name>.content")
    cv.add_argument("--cites", help="LINQS <name>.cites")
    cv.add_argument("--name", required=True)
    cv.add_argument("--seed", type=int, default=0, help="split seed for LINQS sources")
    cv.add_argument("--compress", action="store_true", help="write .csv.gz files")
    cv.add_argument("--out", required=True)
    cv.set_defaults(func=cmd_convert)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        verbosity = getattr(args, "verbosity", 0) or 0
        logging.basicConfig(level=logging.DEBUG if verbosity > 1 else logging.INFO if verbosity else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        with _thread_limits(_thread_cap()):
            return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
