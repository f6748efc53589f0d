import os

import numpy as np
import pytest

from earlyexit.data import load_dataset
from earlyexit.ensemble import load_model

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")

# Hand-traced per-tree outputs of tiny_model.json on tiny.letor, keyed by (qid, doc).
TINY_TREE_OUTPUTS = {
    (1, 0): (1.0, 0.25, -1.5, 0.5),
    (1, 1): (2.0, 0.75, 0.125, 0.5),
    (1, 2): (2.0, -0.5, 0.125, -0.25),
    (1, 3): (1.0, 0.25, 0.125, 0.5),
    (2, 0): (1.0, -0.5, 0.125, 0.5),
    (2, 1): (2.0, 0.75, 0.125, 1.25),
    (3, 0): (2.0, 0.25, 0.125, 0.5),
    (3, 1): (1.0, 0.75, -1.5, 0.5),
    (3, 2): (2.0, 0.25, 0.125, 1.25),
}


def fixture_path(name):
    return os.path.join(FIXTURES, name)


@pytest.fixture(scope="session")
def tiny_model():
    return load_model(fixture_path("tiny_model.json"))


@pytest.fixture(scope="session")
def tiny_data():
    return load_dataset(fixture_path("tiny.letor"))


@pytest.fixture(scope="session")
def lgb_fixture():
    ens = load_model(fixture_path("lightgbm_model.txt"))
    probes = np.loadtxt(fixture_path("lightgbm_probes.txt"))
    scores = np.loadtxt(fixture_path("lightgbm_scores.txt"))
    return ens, probes, scores


@pytest.fixture(scope="session")
def bench():
    """Synthetic benchmark with a 100-tree ranker and an exit classifier at s = T/2."""
    from benchmark import build_benchmark

    return build_benchmark()


# --- acceptance report --------------------------------------------------------
# Tests marked ``acceptance("name")`` contribute one PASS/FAIL line to the
# terminal summary.

_ACCEPTANCE: dict[str, bool] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not mark.args:
        return
    name = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _ACCEPTANCE[name] = _ACCEPTANCE.get(name, True) and rep.passed


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in _ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
