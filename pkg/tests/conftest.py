import numpy as np
import pytest

from pmpnmpc.config import default_config_path, load_config
from pmpnmpc.dynamics import LotkaVolterraParams, make_lotka_volterra
from pmpnmpc.hamiltonian import (
    CostWeights,
    InputBox,
    OcpSpec,
    circle_reference,
    constant_reference,
    disk_exclusion,
)

LV = LotkaVolterraParams()


def predator_prey_spec(horizon=1e-3, penalties=True):
    return OcpSpec(
        model=make_lotka_volterra(LV),
        weights=CostWeights([10.0, 35.0], [500.0, 500.0], [10.0, 35.0]),
        box=InputBox(np.array([-10.0, -5.0]), np.array([10.0, 5.0])),
        reference=circle_reference([100.0, 50.0], 10.0),
        horizon=horizon,
        penalties=(disk_exclusion([100.0, 51.5], 5.0, 1e6, 1.0),) if penalties else (),
    )


def equilibrium_spec(horizon=1e-3):
    """Reference parked on the open-loop equilibrium (1, 1)."""
    return OcpSpec(
        model=make_lotka_volterra(LV),
        weights=CostWeights([10.0, 35.0], [500.0, 500.0], [10.0, 35.0]),
        box=InputBox(np.array([-10.0, -5.0]), np.array([10.0, 5.0])),
        reference=constant_reference([1.0, 1.0]),
        horizon=horizon,
    )


@pytest.fixture
def lv_spec():
    return predator_prey_spec()


@pytest.fixture
def eq_spec():
    return equilibrium_spec()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def shipped_config():
    return load_config(default_config_path())


@pytest.fixture(scope="session")
def ci_config():
    return load_config(default_config_path("lotka_volterra_ci.cfg"))


_VERDICTS = []


@pytest.fixture
def verdict(capsys):
    """Record and echo one PASS/FAIL line for an acceptance criterion."""

    def emit(number, passed, text):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {text}"
        _VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
