import numpy as np
import pytest

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _random_simplex(rng, size, K, low=0.0):
    x = rng.dirichlet(np.ones(K), size=size)
    if low:
        x = (x + low) / (1.0 + K * low)
    return x


@pytest.fixture
def random_simplex():
    """``f(rng, size, K, low=0)``: uniform simplex draws, optionally shrunk off the boundary."""
    return _random_simplex


@pytest.fixture
def criterion():
    """Record one acceptance criterion's outcome for the terminal summary."""

    def record(name, passed, detail=""):
        _ACCEPTANCE.append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
