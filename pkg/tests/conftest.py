from __future__ import annotations

import itertools

import numpy as np
import pytest

from mforge.construction import ConstructedMeasure, plan
from mforge.targeting import build_family

A, B = 0.2, 0.8


@pytest.fixture(scope="session")
def small_plan():
    fam = build_family(A, B, J_max=2, max_memory=12, seed=0)
    return plan(A, B, fam, "scaled", [12, 36])


@pytest.fixture(scope="session")
def small_measure(small_plan):
    return ConstructedMeasure(small_plan)


@pytest.fixture(scope="session")
def deep_plan():
    fam = build_family(A, B, J_max=4, max_memory=12, seed=0)
    return plan(A, B, fam, "scaled", [8, 64, 512, 4096])


@pytest.fixture(scope="session")
def deep_measure(deep_plan):
    return ConstructedMeasure(deep_plan)


def all_words(j):
    return ["".join(w) for w in itertools.product("01", repeat=j)]


def brute_logsum(values):
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    if len(values) == 0:
        return -np.inf
    m = values.max()
    return m + np.log2(np.sum(2.0 ** (values - m)))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
