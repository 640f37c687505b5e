import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


UNIT_LEVEL = 0.9999


def inside_ci(est, oracle, level=UNIT_LEVEL):
    """Oracle inside the exact binomial interval of ``est`` at ``level``.

    Unit tests check many oracles per run, so they use a wide interval; the
    acceptance suite uses the 95% intervals reported by the library.
    """
    from smallball_lab.stats import clopper_pearson
    lo, hi = clopper_pearson(est.successes, est.trials, level)
    return lo <= oracle <= hi


def within_sigma(est, oracle, n_sigma=4.0):
    """``|value - oracle| <= n_sigma * std_error`` for a moment-type estimate."""
    return abs(est.value - oracle) <= n_sigma * est.std_error


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
