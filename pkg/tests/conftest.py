import json
from pathlib import Path

import numpy as np
import pytest

from qpresonance.model import (random_hamiltonian, sample_model, second_order_model,
                               small_divisor_model)
from qpresonance.smalldiv import build_profile

FROZEN = json.loads((Path(__file__).parent / "oracles" / "frozen.json").read_text())
GOLDEN = np.array([1.0, (1 + 5 ** 0.5) / 2])

# lines collected by the acceptance tests, printed at the end of the run
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def frozen():
    return FROZEN


@pytest.fixture(scope="session")
def sample():
    return sample_model()


@pytest.fixture(scope="session")
def random_model():
    return random_hamiltonian(0, n_modes=3, M_beta=2, D_B=1)


@pytest.fixture(scope="session")
def small_div():
    return small_divisor_model()


@pytest.fixture(scope="session")
def second_order():
    return second_order_model()


@pytest.fixture(scope="session")
def golden_profile():
    return build_profile(GOLDEN, 8)
