import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from tirs.examples import (  # noqa: E402
    Example1Config,
    Example2Config,
    build_example1,
    build_example2,
    cost_tables,
    fixed_kernel_model,
    tabulated_model,
)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def ex1():
    return build_example1(Example1Config(window=5))


@pytest.fixture(scope="session")
def ex2():
    return build_example2()


@pytest.fixture(scope="session")
def fixed():
    return fixed_kernel_model()


def two_state(q=(0.5, 0.5), horizon=1, running=0.0, terminal=(0.0, 0.0)):
    """Two states, one action, the same row from both states."""
    states = (0, 1)
    acts = {0: (0,), 1: (0,)}
    rows = {(0, 0): q, (1, 0): q}
    costs = cost_tables(states, acts, horizon, lambda tau, t, x, u: running,
                        lambda tau, x: terminal[x])
    return tabulated_model(rows, horizon, costs, states, acts)


def example2_with_rates(lam, **kw):
    rates = {(x, u): lam for x in (1, 2, 3) for u in (0, 1)}
    return build_example2(Example2Config(rates=rates, **kw))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
