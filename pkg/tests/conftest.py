import numpy as np
import pytest

from consensus_flow.experiment import paper_instance

# filled by test_acceptance; printed once at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def paper():
    return paper_instance()


@pytest.fixture(scope="session")
def paper_free():
    return paper_instance(unconstrained=True)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
