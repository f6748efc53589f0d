"""Regenerate tests/fixtures/exit_probe_proba.txt.

Runs synth -> train-ranker -> train-exit through the command line on the
reduced synthetic splits and records the classifier's probabilities on ten
fixed probe vectors. Only rerun after an intentional change to training.
"""
import os
import sys
import tempfile

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "tests"))

from benchmark import probe_vectors, write_small_benchmark  # noqa: E402

from earlyexit.cli import main  # noqa: E402
from earlyexit.gbdt import load_forest  # noqa: E402

OUT = os.path.join(HERE, "..", "tests", "fixtures", "exit_probe_proba.txt")


def build(directory: str) -> str:
    paths = write_small_benchmark(directory)
    ranker = os.path.join(directory, "ranker.json")
    clf = os.path.join(directory, "exit.json")
    assert main(["train-ranker", "--train", paths["ranker_train"], "--out", ranker]) == 0
    assert main(["train-exit", "--model", ranker, "--train", paths["exit_train"],
                 "--valid", paths["valid"], "--sentinel", "50", "--out", clf]) == 0
    return clf


def main_() -> None:
    with tempfile.TemporaryDirectory() as d:
        with open(build(d)) as fh:
            forest = load_forest(fh.read())
    proba = forest.predict_proba(probe_vectors())
    np.savetxt(OUT, proba, fmt="%.17g")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main_()
