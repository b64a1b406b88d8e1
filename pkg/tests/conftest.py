import numpy as np
import pytest

from ftopt import signals as sg
from ftopt.graph import cycle
from ftopt.problems import SquaredAffineCost

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE = {}


def four_agent_models():
    """f_i = (a_i x + b_i(t))^2 / 2 with a = 1..4 and b = t, sin t, cos t, t/2."""
    drifts = [sg.linear(1.0), sg.sin(), sg.cos(), sg.linear(0.5)]
    return [SquaredAffineCost(float(a), (b,)) for a, b in zip((1, 2, 3, 4), drifts)]


@pytest.fixture
def four_agents():
    return four_agent_models()


@pytest.fixture
def cycle4():
    return cycle(4)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:].split("_")[0]) if k[1:].split("_")[0].isdigit() else 99):
        checks = ACCEPTANCE[key]
        ok = all(passed for passed, _ in checks)
        detail = "; ".join(msg for _, msg in checks)
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")
