import math

import pytest

from kinephase.model import ModelParams
from kinephase.pulse import solve_pulse

# amplitudes used throughout the reference tables
SIGMAS = (math.sqrt(2) / 64, 1 / 32, math.sqrt(2) / 32, 1 / 16, math.sqrt(2) / 16)

# squared Fourier amplitudes of the Gaussian-correlated experiment, k = 0..10
GAUSSIAN_A_SQ = (0.17724, 0.32118, 0.23886, 0.14582, 0.07308, 0.03006,
                 0.01015, 0.00281, 0.00064, 0.00012, 0.00002)


@pytest.fixture(scope="session")
def params():
    return ModelParams(L=10.0, alpha=0.2, gamma=1.0 / 3.0)


@pytest.fixture(scope="session")
def pulse(params):
    return solve_pulse(params, 163)


@pytest.fixture(scope="session")
def pulse605(params):
    return solve_pulse(params, 605)


# acceptance criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
