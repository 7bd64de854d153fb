import numpy as np
import pytest

from qetsim.magnetics import QetParams
from qetsim.transmon import TransmonParams

# Lines collected by the acceptance module, echoed after the run.
ACCEPTANCE_LINES: list[str] = []

I_WORK = 13.58935e-6


@pytest.fixture
def qet():
    return QetParams.reference()


@pytest.fixture
def qubit():
    return TransmonParams.reference()


@pytest.fixture
def qubit_pair():
    p1 = TransmonParams.reference()
    return p1, p1.replace(i_idle=I_WORK)


@pytest.fixture
def rng():
    return np.random.default_rng(20260415)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
