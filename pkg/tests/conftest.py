from __future__ import annotations

import time
from dataclasses import replace

import numpy as np
import pytest

from elconsensus.integrator import integrate
from elconsensus.scenario import builtin_example


@pytest.fixture(scope="session")
def builtin():
    return builtin_example()


@pytest.fixture(scope="session")
def builtin_run(builtin):
    """The built-in example over 60 s at h = 1e-3, every step recorded."""
    sc = replace(builtin, integrator=replace(builtin.integrator, record_every=1))
    start = time.perf_counter()
    log = integrate(sc)
    return log, time.perf_counter() - start


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
