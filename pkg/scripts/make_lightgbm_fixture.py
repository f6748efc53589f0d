"""Regenerate the LightGBM parser fixture in tests/fixtures/.

Trains a small lambdarank model with LightGBM and records its raw
predictions on 100 probe vectors (a quarter of them sit exactly on split
thresholds to pin the ``<=`` routing). Needs ``pip install lightgbm``.
"""
import argparse
import os

import lightgbm as lgb
import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "tests", "fixtures"))
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    n_q, n_d, F = 40, 12, 6
    X = rng.random((n_q * n_d, F))
    X[:, 5] = rng.integers(0, 4, len(X))  # a coarse feature with many ties
    y = np.clip(np.round(3 * X[:, 0] + 2 * X[:, 1] * X[:, 2] + rng.normal(0, 0.4, len(X)) - 1), 0, 4)
    train = lgb.Dataset(X, y.astype(int), group=[n_d] * n_q)
    params = dict(objective="lambdarank", num_leaves=8, learning_rate=0.1, min_data_in_leaf=5,
                  verbose=-1, seed=args.seed, deterministic=True)
    booster = lgb.train(params, train, num_boost_round=20)

    probes = rng.random((100, F))
    probes[:, 5] = rng.integers(0, 4, 100)
    dump = booster.dump_model()
    thresholds = []
    for info in dump["tree_info"]:
        stack = [info["tree_structure"]]
        while stack:
            node = stack.pop()
            if "split_feature" in node:
                thresholds.append((node["split_feature"], node["threshold"]))
                stack += [node["left_child"], node["right_child"]]
    for i in range(25):
        f, thr = thresholds[int(rng.integers(len(thresholds)))]
        probes[i, f] = thr

    os.makedirs(args.out, exist_ok=True)
    booster.save_model(os.path.join(args.out, "lightgbm_model.txt"))
    raw = booster.predict(probes, raw_score=True)
    with open(os.path.join(args.out, "lightgbm_probes.txt"), "w") as fh:
        for x in probes:
            fh.write(" ".join(repr(float(v)) for v in x) + "\n")
    with open(os.path.join(args.out, "lightgbm_scores.txt"), "w") as fh:
        for v in raw:
            fh.write(f"{float(v)!r}\n")
    print(f"wrote fixture ({booster.num_trees()} trees) to {args.out}")


if __name__ == "__main__":
    main()
