import numpy as np
import pytest

from turretaim.experiments import (design_controllers, experiment1, experiment2, experiment4,
                                   experiment5)
from turretaim.turret import TurretParams, axis_tfs

SEED = 42
N_TRIALS = 10_000


@pytest.fixture(scope="session")
def params():
    return TurretParams()


@pytest.fixture(scope="session")
def plants(params):
    return axis_tfs(params)


@pytest.fixture(scope="session")
def controllers(params):
    return design_controllers(params)


@pytest.fixture(scope="session")
def exp1_pid(params, controllers):
    return experiment1("pid", params, N_TRIALS, SEED, controllers=controllers)


@pytest.fixture(scope="session")
def exp1_mpc(params):
    return experiment1("mpc", params, N_TRIALS, SEED)


@pytest.fixture(scope="session")
def exp2_pid(params, controllers):
    return experiment2("pid", params, N_TRIALS, SEED, controllers=controllers)


@pytest.fixture(scope="session")
def exp4_res(params, controllers):
    return experiment4(params, N_TRIALS, SEED, controllers=controllers)


@pytest.fixture(scope="session")
def exp5_res(params, controllers):
    return experiment5(params, controllers=controllers)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number, passed, detail):
        ACCEPTANCE_LINES[number] = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
        print(ACCEPTANCE_LINES[number])
        assert passed, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
