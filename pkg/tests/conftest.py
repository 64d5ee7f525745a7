import numpy as np
import pytest

from esn_ensemble.datasets import mackey_glass
from esn_ensemble.reservoir import EsnConfig


@pytest.fixture(scope="session")
def mg_series():
    return mackey_glass(4000)


@pytest.fixture
def small_config():
    return EsnConfig(n_res=50, rho=0.9, washout_len=20, master_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one verdict line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
