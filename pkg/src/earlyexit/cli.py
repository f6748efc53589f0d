"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 data or model error.

Settings are resolved as built-in defaults < ``--config`` TOML file <
environment (``EARLYEXIT_THREADS``, ``EARLYEXIT_OUTPUT_DIR``) < flags.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from typing import Any, Sequence

import numpy as np

from .data import Dataset, ParseError, dataset_stats, load_dataset, write_dataset
from .ensemble import Ensemble, SchemaError, load_model, save_native
from .exitset import build_exit_training_set, example_arrays, write_examples
from .experiment import STRATEGIES, evaluate, full_reference, make_params
from .gbdt import (
    LOGISTIC,
    SQUARED,
    Forest,
    TrainParams,
    feature_importance,
    load_forest,
    save_forest,
    top_features,
    train_forest,
)
from .metrics import mean_ndcg, ndcg_at_k, precision_recall
from .scorer import rank_order
from .synth import SynthConfig, make_benchmark

log = logging.getLogger("earlyexit")

EXIT_USAGE = 2
EXIT_DATA = 3

DEFAULT_SENTINELS = (50, 100, 200)
DEFAULT_TAU_GRID = tuple(round(0.1 * i, 10) for i in range(1, 8))
DEFAULT_P_GRID = tuple(round(0.1 * i, 10) for i in range(3, 9))
DEFAULT_KS_GRID = (5, 10, 15, 20)
SWEEP_COLUMNS = ("strategy", "sentinel", "threshold", "ndcg", "delta_pct", "speedup",
                 "ks_mu", "ks_sigma")

ENV_THREADS = "EARLYEXIT_THREADS"
ENV_OUTPUT_DIR = "EARLYEXIT_OUTPUT_DIR"


class UsageError(Exception):
    pass


def _fmt(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite value {v} in report")
    return format(v, ".10g")


def _out_path(args, path: str) -> str:
    base = getattr(args, "output_dir", None)
    if base and not os.path.isabs(path):
        os.makedirs(base, exist_ok=True)
        return os.path.join(base, path)
    return path


def atomic_write(path: str, text: str) -> None:
    """Write via a temporary file in the same directory and rename over ``path``."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def effective_config(args) -> dict[str, Any]:
    skip = {"func", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _load(path: str, num_features: int | None = None) -> Dataset:
    try:
        return load_dataset(path, num_features)
    except ParseError as exc:
        raise ParseError(f"{path}: {exc}") from None


def _model(path: str) -> Ensemble:
    try:
        return load_model(path)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _classifier(path: str) -> Forest:
    with open(path) as fh:
        text = fh.read()
    try:
        return load_forest(text)
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _matrix(ds: Dataset) -> tuple[np.ndarray, np.ndarray]:
    return (np.vstack([g.features for g in ds.groups]),
            np.concatenate([g.relevance for g in ds.groups]).astype(np.float64))


def _train_params(args, loss: str) -> TrainParams:
    return TrainParams(num_trees=args.trees, max_leaves=args.max_leaves,
                       learning_rate=args.learning_rate, l2_lambda=args.l2_lambda,
                       min_examples_per_leaf=args.min_leaf, loss=loss)


# --- commands -------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthConfig(seed=args.seed)
    out = _out_path(args, args.out)
    os.makedirs(out, exist_ok=True)
    for name, ds in make_benchmark(cfg).items():
        path = os.path.join(out, f"{name}.txt")
        write_dataset(ds, path)
        nq, nd, mean = dataset_stats(ds)
        print(f"{path}: {nq} queries, {nd} documents ({mean:.1f}/query)")
    return 0


def cmd_stats(args) -> int:
    ds = _load(args.data)
    nq, nd, mean = dataset_stats(ds)
    rel = np.concatenate([g.relevance for g in ds.groups])
    hist = np.bincount(rel, minlength=5)
    print(f"queries: {nq}")
    print(f"documents: {nd}")
    print(f"docs/query: {mean:.2f}")
    print(f"features: {ds.num_features}")
    print("relevance: " + " ".join(f"{i}:{c}" for i, c in enumerate(hist)))
    return 0


def cmd_train_ranker(args) -> int:
    train = _load(args.train)
    valid = _load(args.valid, train.num_features) if args.valid else None
    X, y = _matrix(train)
    params = _train_params(args, SQUARED)
    raw_valid = None
    if valid is not None:
        raw_valid = [np.zeros(len(g)) for g in valid.groups]

    def report(r, tree):
        if valid is None:
            return
        vals = []
        for i, g in enumerate(valid.groups):
            raw_valid[i] += tree.predict(g.features)
            vals.append(ndcg_at_k(rank_order(raw_valid[i]), g.relevance, args.k))
        print(f"round {r + 1}: valid NDCG@{args.k} = {mean_ndcg(vals):.6f}")

    forest = train_forest(X, y, None, params, callback=report)
    if forest.degenerate:
        print("warning: constant training labels; the model is constant", file=sys.stderr)
    out = _out_path(args, args.out)
    atomic_write(out, save_native(forest.ensemble))
    print(f"wrote {out} ({forest.num_trees} trees)")
    return 0


def tau_report(forest: Forest, X: np.ndarray, y: np.ndarray, grid: Sequence[float]) -> list[dict]:
    proba = forest.predict_proba(X)
    rows = []
    for tau in grid:
        pred = (proba >= tau).astype(np.int64)
        pr = precision_recall(y.astype(np.int64), pred)
        rows.append({
            "tau": float(tau),
            "continue_precision": pr["continue"][0],
            "continue_recall": pr["continue"][1],
            "exit_precision": pr["exit"][0],
            "exit_recall": pr["exit"][1],
            "continue_fraction": float(pred.mean()),
        })
    return rows


def choose_tau(rows: list[dict], exit_recall_floor: float) -> float | None:
    """Highest Continue recall with Exit recall at or above the floor; ties favour larger tau."""
    ok = [r for r in rows if r["exit_recall"] >= exit_recall_floor]
    if not ok:
        return None
    return max(ok, key=lambda r: (r["continue_recall"], r["tau"]))["tau"]


def _print_tau_rows(rows):
    print("tau   C.prec  C.rec   E.prec  E.rec   cont%")
    for r in rows:
        print(f"{r['tau']:.2f}  {r['continue_precision']:.4f}  {r['continue_recall']:.4f}  "
              f"{r['exit_precision']:.4f}  {r['exit_recall']:.4f}  {100 * r['continue_fraction']:.1f}")


def cmd_train_exit(args) -> int:
    ens = _model(args.model)
    train = _load(args.train, ens.num_features)
    valid = _load(args.valid, ens.num_features)
    if not 1 <= args.sentinel <= len(ens):
        raise ValueError(f"sentinel {args.sentinel} outside 1..{len(ens)}")
    examples = build_exit_training_set(ens, train, args.sentinel, args.k_label, args.threads)
    if args.dump_examples:
        write_examples(examples, _out_path(args, args.dump_examples))
    X, y, w = example_arrays(examples)
    params = _train_params(args, LOGISTIC)
    forest = train_forest(X, y, w, params)
    if args.top_features:
        keep = top_features(forest, args.top_features)
        params = TrainParams(**{**params.__dict__, "allowed_features": keep})
        forest = train_forest(X, y, w, params)
    if forest.degenerate:
        print("warning: training labels are all one class; classifier is constant", file=sys.stderr)
    forest.metadata = {"sentinel": args.sentinel, "k_label": args.k_label,
                       "num_raw_features": ens.num_features}

    vex = build_exit_training_set(ens, valid, args.sentinel, args.k_label, args.threads)
    Xv, yv, _ = example_arrays(vex)
    if not yv.any():
        print("warning: validation split has no Continue documents; "
              "Continue recall reported as 1.0", file=sys.stderr)
    rows = tau_report(forest, Xv, yv, args.tau_grid)
    best = choose_tau(rows, args.exit_recall_floor)
    _print_tau_rows(rows)
    print(f"chosen tau: {best if best is not None else 'none (exit-recall floor unmet)'}")

    out = _out_path(args, args.out)
    atomic_write(out, save_forest(forest))
    report = {"config": effective_config(args), "tau_report": rows, "chosen_tau": best,
              "feature_importance": [[f, g] for f, g in feature_importance(forest)]}
    atomic_write(out + ".report.json", json.dumps(report, indent=1, sort_keys=True))
    print(f"wrote {out}")
    return 0


def cmd_eval_classifier(args) -> int:
    ens = _model(args.model)
    clf = _classifier(args.classifier)
    data = _load(args.data, ens.num_features)
    s = args.sentinel or clf.metadata.get("sentinel")
    if s is None:
        raise UsageError("classifier has no recorded sentinel; pass --sentinel")
    k_label = args.k_label or clf.metadata.get("k_label", 15)
    ex = build_exit_training_set(ens, data, int(s), int(k_label), args.threads)
    X, y, _ = example_arrays(ex)
    rows = tau_report(clf, X, y, args.tau_grid)
    _print_tau_rows(rows)
    print("feature importance (gain):")
    for f, g in feature_importance(clf)[: args.top]:
        print(f"  {f:4d}  {g:.6g}")
    if args.output:
        report = {"config": effective_config(args), "tau_report": rows,
                  "feature_importance": [[f, g] for f, g in feature_importance(clf)]}
        atomic_write(_out_path(args, args.output), json.dumps(report, indent=1, sort_keys=True))
    return 0


def _classifiers_by_sentinel(paths: Sequence[str]) -> dict[int, Forest]:
    out = {}
    for p in paths or ():
        clf = _classifier(p)
        s = clf.metadata.get("sentinel")
        if s is None:
            raise SchemaError(f"{p}: classifier has no recorded sentinel")
        out[int(s)] = clf
    return out


def cmd_run(args) -> int:
    ens = _model(args.model)
    test = _load(args.test, ens.num_features)
    clf = None
    if args.strategy == "lear":
        if not args.classifier:
            raise UsageError("strategy lear needs --classifier")
        clf = _classifier(args.classifier[0])
    threshold = args.threshold
    if args.strategy == "lear" and threshold is None:
        threshold = 0.5
    params = make_params(args.strategy, threshold, k_s=args.k_s, classifier=clf, k=args.k)
    s = args.sentinel[0] if args.sentinel else DEFAULT_SENTINELS[0]
    ref = full_reference(ens, test, args.k, args.zero_idcg, args.gain, args.threads)
    ev = evaluate(ens, test, s, params, ref, merge_by_score=args.merge_by_score,
                  threads=args.threads, zero_idcg=args.zero_idcg, gain=args.gain,
                  wall_clock=args.wall_clock)
    pt = ev.point
    print(f"strategy: {pt.strategy}  sentinel: {pt.sentinel}  threshold: {pt.threshold}")
    print(f"NDCG@{args.k}: {pt.ndcg:.6f} (full {pt.ndcg_full:.6f}, delta {pt.delta_pct:+.4f}%)")
    print(f"speedup (tree count): {pt.speedup:.4f}x")
    if ev.wall_clock_speedup is not None:
        print(f"speedup (wall clock): {ev.wall_clock_speedup:.4f}x")
    print(f"ks_mu: {pt.ks_mu:.4f}  ks_sigma: {pt.ks_sigma:.4f}")
    report = {
        "config": effective_config(args),
        "result": {**pt.as_dict(), "wall_clock_speedup": ev.wall_clock_speedup,
                   "ranker_trees": ev.result.cost.ranker_trees,
                   "strategy_trees": ev.result.cost.strategy_trees,
                   "full_trees": ref.cost.ranker_trees},
    }
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.output:
        atomic_write(_out_path(args, args.output), text + "\n")
    else:
        print(text)
    return 0


def sweep_rows(ens: Ensemble, test: Dataset, strategies: Sequence[str], sentinels: Sequence[int],
               grids: dict[str, Sequence[float]], classifiers: dict[int, Forest], *, k: int = 10,
               k_s: int = 15, merge_by_score: bool = False, threads: int = 1,
               zero_idcg: str = "one", gain: str = "exp") -> list[dict]:
    ref = full_reference(ens, test, k, zero_idcg, gain, threads)
    rows = []
    for strategy in strategies:
        for s in sentinels:
            if strategy == "lear" and s not in classifiers:
                raise UsageError(f"no classifier for sentinel {s}")
            for thr in grids.get(strategy, (None,)):
                params = make_params(strategy, thr, k_s=k_s, classifier=classifiers.get(s), k=k)
                pt = evaluate(ens, test, s, params, ref, merge_by_score=merge_by_score,
                              threads=threads, zero_idcg=zero_idcg, gain=gain).point
                rows.append({
                    "strategy": strategy,
                    "sentinel": str(pt.sentinel),
                    "threshold": "" if pt.threshold is None else _fmt(pt.threshold),
                    "ndcg": _fmt(pt.ndcg),
                    "delta_pct": _fmt(pt.delta_pct),
                    "speedup": _fmt(pt.speedup),
                    "ks_mu": _fmt(pt.ks_mu),
                    "ks_sigma": _fmt(pt.ks_sigma),
                })
    return rows


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cmd_sweep(args) -> int:
    ens = _model(args.model)
    test = _load(args.test, ens.num_features)
    for s in args.sentinel:
        if not 1 <= s <= len(ens):
            raise ValueError(f"sentinel {s} outside 1..{len(ens)}")
    classifiers = _classifiers_by_sentinel(args.classifier)
    grids = {"ert": args.ks_grid, "ept": args.p_grid, "lear": args.tau_grid,
             "ideal": (None,), "full": (None,)}
    rows = sweep_rows(ens, test, args.strategy, args.sentinel, grids, classifiers, k=args.k,
                      k_s=args.k_s, merge_by_score=args.merge_by_score, threads=args.threads,
                      zero_idcg=args.zero_idcg, gain=args.gain)
    text = rows_to_csv(rows)
    if args.output:
        out = _out_path(args, args.output)
        atomic_write(out, text)
        print(f"wrote {out} ({len(rows)} rows)")
    else:
        sys.stdout.write(text)
    return 0


# --- parser ---------------------------------------------------------------

def _positive_int(v: str) -> int:
    i = int(v)
    if i < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return i


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML file with option defaults")
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--output-dir", help="directory for relative output paths")


def _add_train(p: argparse.ArgumentParser, trees: int) -> None:
    p.add_argument("--trees", type=_positive_int, default=trees)
    p.add_argument("--max-leaves", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--l2-lambda", type=float, default=1.0)
    p.add_argument("--min-leaf", type=_positive_int, default=5)


def _add_eval(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k", type=_positive_int, default=10, help="NDCG cutoff")
    p.add_argument("--k-s", type=_positive_int, default=15, help="rank threshold for EPT")
    p.add_argument("--merge-by-score", action="store_true",
                   help="rank exited and continued documents in one pool by score")
    p.add_argument("--zero-idcg", choices=("one", "skip"), default="one")
    p.add_argument("--gain", choices=("exp", "linear"), default="exp")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earlyexit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write the seeded synthetic benchmark splits")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=SynthConfig.seed)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="dataset statistics")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-ranker", help="train a pointwise squared-loss ranker")
    _add_common(p)
    _add_train(p, trees=100)
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--k", type=_positive_int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_ranker)

    p = sub.add_parser("train-exit", help="train the learned exit classifier")
    _add_common(p)
    _add_train(p, trees=10)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--sentinel", type=_positive_int, required=True)
    p.add_argument("--k-label", type=_positive_int, default=15)
    p.add_argument("--tau-grid", type=float, nargs="+", default=list(DEFAULT_TAU_GRID))
    p.add_argument("--exit-recall-floor", type=float, default=0.0)
    p.add_argument("--top-features", type=_positive_int,
                   help="retrain on the m features with the largest total gain")
    p.add_argument("--dump-examples", help="write the training set as LETOR + .weight sidecar")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_exit)

    p = sub.add_parser("eval-classifier", help="per-class precision/recall of an exit classifier")
    _add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--sentinel", type=_positive_int)
    p.add_argument("--k-label", type=_positive_int)
    p.add_argument("--tau-grid", type=float, nargs="+", default=list(DEFAULT_TAU_GRID))
    p.add_argument("--top", type=_positive_int, default=10)
    p.add_argument("--output")
    p.set_defaults(func=cmd_eval_classifier)

    p = sub.add_parser("run", help="evaluate one strategy against full scoring")
    _add_common(p)
    _add_eval(p)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, required=True)
    p.add_argument("--sentinel", type=_positive_int, nargs=1)
    p.add_argument("--threshold", type=float,
                   help="k_s for ert, p for ept, tau for lear")
    p.add_argument("--classifier", nargs=1)
    p.add_argument("--wall-clock", action="store_true",
                   help="also measure median latency speedup (not deterministic)")
    p.add_argument("--output", help="JSON report path (default: stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="trade-off grid over strategies, sentinels and thresholds")
    _add_common(p)
    _add_eval(p)
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--strategy", choices=STRATEGIES, nargs="+", default=["ept", "lear"])
    p.add_argument("--sentinel", type=_positive_int, nargs="+", default=list(DEFAULT_SENTINELS))
    p.add_argument("--p-grid", type=float, nargs="+", default=list(DEFAULT_P_GRID))
    p.add_argument("--tau-grid", type=float, nargs="+", default=list(DEFAULT_TAU_GRID))
    p.add_argument("--ks-grid", type=_positive_int, nargs="+", default=list(DEFAULT_KS_GRID))
    p.add_argument("--classifier", nargs="+", help="exit classifiers, one per sentinel")
    p.add_argument("--output", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sweep)
    return parser


def _read_config(path: str) -> dict[str, Any]:
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    return {k.replace("-", "_"): v for k, v in doc.items()}


def parse_args(argv: Sequence[str] | None, parser: argparse.ArgumentParser) -> argparse.Namespace:
    args = parser.parse_args(argv)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    defaults: dict[str, Any] = {}
    if args.config:
        defaults.update(_read_config(args.config))
    if os.environ.get(ENV_THREADS):
        defaults["threads"] = int(os.environ[ENV_THREADS])
    if os.environ.get(ENV_OUTPUT_DIR):
        defaults["output_dir"] = os.environ[ENV_OUTPUT_DIR]
    if defaults:
        known = {a.dest for a in sub._actions}
        unknown = set(defaults) - known
        if unknown:
            parser.error(f"unknown config keys for {args.command}: {', '.join(sorted(unknown))}")
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        args = parse_args(argv, parser)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:  # ParseError and SchemaError are ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
