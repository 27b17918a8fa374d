import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("femkit", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("FEMKIT_HYPOTHESIS_PROFILE", "femkit"))

DEMOS = os.path.join(os.path.dirname(__file__), "..", "src", "femkit", "demos")


def random_simplex(rng, tdim, min_det=0.1):
    """Random affine simplex with |det J| >= min_det, vertices in [-1, 1]^tdim."""
    while True:
        X = rng.uniform(-1.0, 1.0, (tdim + 1, tdim))
        if abs(np.linalg.det((X[1:] - X[0]).T)) >= min_det:
            return X


def neighbour_simplex(rng, X):
    """A simplex sharing a random facet of ``X``, with shuffled vertex order."""
    tdim = X.shape[1]
    f = rng.integers(tdim + 1)
    fv = [i for i in range(tdim + 1) if i != f]
    centre = X[fv].mean(axis=0)
    while True:
        opp = 2 * centre - X[f] + 0.2 * rng.normal(size=tdim)
        # keep the new vertex strictly across the shared facet
        J_old = np.column_stack([X[v] - X[f] for v in fv])
        J_new = np.column_stack([X[v] - opp for v in fv])
        if np.linalg.det(J_old) * np.linalg.det(J_new) < 0 and \
                abs(np.linalg.det(J_new)) >= 0.05:
            break
    Y = np.vstack([X[fv], opp])
    return Y[rng.permutation(tdim + 1)]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def demos_dir():
    return os.path.abspath(DEMOS)


# ---------------------------------------------------------------- acceptance summary
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        number = int(name.split("_")[2])
        ok = report.outcome == "passed"
        _CRITERIA.setdefault(number, []).append((name, ok))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        runs = _CRITERIA[number]
        status = "PASS" if all(ok for _, ok in runs) else "FAIL"
        label = runs[0][0].split("[")[0].split("_", 3)[3]
        terminalreporter.write_line(f"criterion {number:2d} {label:<28s} {status}"
                                    f"  ({sum(ok for _, ok in runs)}/{len(runs)} cases)")
