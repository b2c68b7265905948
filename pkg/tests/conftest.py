import numpy as np
import pytest

from odentropy import Scenario, kernels


@pytest.fixture
def line3():
    """Three stations on a line, A-B 5 km, B-C 4 km; daily entries 10, 4, 2."""
    d = [[0, 5, 9], [5, 0, 4], [9, 4, 0]]
    return Scenario.from_arrays([[10.0], [4.0], [2.0]], d, ["A", "B", "C"])


@pytest.fixture
def line3_feasible():
    """Same line with entries 5, 4, 3 (no station outweighs the rest)."""
    d = [[0, 5, 9], [5, 0, 4], [9, 4, 0]]
    return Scenario.from_arrays([[5.0], [4.0], [3.0]], d, ["A", "B", "C"])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


BACKENDS = ["python"] + (["cython"] if kernels.compiled_available() else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    monkeypatch.setattr(kernels, "BACKEND", request.param)
    return request.param


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, then assert it."""
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
