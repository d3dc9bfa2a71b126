import numpy as np
import pytest
from hypothesis import settings

from sepdec.barriers import BoxBarrier
from sepdec.generators import toy_suite
from sepdec.problem import Component, ScalarObjective, SeparableProblem

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


def scalar_problem(A, b, lower, upper, objectives):
    """One 1-D box component per column of A; b split evenly."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    share = np.asarray(b, dtype=float) / n
    comps = [Component(A[:, [j]].copy(), share.copy(), BoxBarrier(lower[j], upper[j]),
                       objectives[j]) for j in range(n)]
    return SeparableProblem(comps, A.shape[0])


def random_scalar_problem(rng, n, m, feasible=True):
    """Mixed-kind 1-D components with boxes containing 0."""
    lower = -rng.uniform(0.5, 3.0, n)
    upper = rng.uniform(0.5, 3.0, n)
    objs = []
    for _ in range(n):
        kind = ("zero", "affine", "exp")[rng.integers(3)]
        objs.append(ScalarObjective(kind, coef=rng.uniform(-1, 1), rate=rng.uniform(0.1, 1.0),
                                    l1_weight=rng.uniform(0.0, 0.5)))
    A = rng.standard_normal((m, n))
    x_bar = lower + (upper - lower) * rng.uniform(0.25, 0.75, n)
    b = A @ x_bar if feasible else rng.standard_normal(m)
    return scalar_problem(A, b, lower, upper, objs), x_bar


@pytest.fixture(scope="session")
def toys():
    return toy_suite()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


#%% acceptance summary

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda s: int(s.split("_")[2])):
        terminalreporter.write_line(f"{_ACCEPTANCE[name]}  {name}")
