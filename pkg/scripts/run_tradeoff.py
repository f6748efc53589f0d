"""Efficiency/effectiveness trade-off on the synthetic benchmark.

Writes the benchmark splits, trains a ranker and one exit classifier per
sentinel, then sweeps every strategy into a single CSV:

    python3 scripts/run_tradeoff.py --out runs/tradeoff --trees 100 --sentinels 25 50 75
"""
import argparse
import csv
import os
import sys

from earlyexit.cli import main as cli


def step(*argv) -> None:
    code = cli([str(a) for a in argv])
    if code:
        sys.exit(code)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/tradeoff")
    ap.add_argument("--trees", type=int, default=100)
    ap.add_argument("--sentinels", type=int, nargs="+", default=[25, 50, 75])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    os.makedirs(args.out, exist_ok=True)
    data = os.path.join(args.out, "data")
    step("synth", "--out", data)
    split = {name: os.path.join(data, f"{name}.txt")
             for name in ("ranker_train", "exit_train", "valid", "test")}
    ranker = os.path.join(args.out, "ranker.json")
    step("train-ranker", "--train", split["ranker_train"], "--valid", split["valid"],
         "--trees", args.trees, "--out", ranker)
    classifiers = []
    for s in args.sentinels:
        path = os.path.join(args.out, f"exit-s{s}.json")
        step("train-exit", "--model", ranker, "--train", split["exit_train"], "--valid", split["valid"],
             "--sentinel", s, "--threads", args.threads, "--out", path)
        classifiers.append(path)
    csv_path = os.path.join(args.out, "tradeoff.csv")
    step("sweep", "--model", ranker, "--test", split["test"],
         "--strategy", "full", "ideal", "ert", "ept", "lear",
         "--sentinel", *args.sentinels, "--classifier", *classifiers,
         "--threads", args.threads, "--output", csv_path)

    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    print(f"\n{'strategy':8s} {'s':>4s} {'thr':>5s} {'NDCG@10':>8s} {'delta%':>8s} {'speedup':>8s}")
    for r in rows:
        print(f"{r['strategy']:8s} {r['sentinel']:>4s} {r['threshold']:>5s} {float(r['ndcg']):8.4f} "
              f"{float(r['delta_pct']):+8.3f} {float(r['speedup']):8.3f}")


if __name__ == "__main__":
    main()
