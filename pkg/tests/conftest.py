import numpy as np
import pytest
from hypothesis import settings

from pwmbif import ConverterSpec, Ramp, RampControl, preset

settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60)
settings.load_profile("repo")

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])


@pytest.fixture(scope="session")
def pd():
    return preset("pd_buck")


@pytest.fixture(scope="session")
def sn():
    return preset("sn_buck")


@pytest.fixture(scope="session")
def ns():
    return preset("ns_buck")


def identical_stage_spec(A=None, b=(5.0, 0.0), C=(0.0, 1.0), D=(0.0, 0.0), ramp=(3.8, 8.2),
                         T=400e-6):
    """A ramp-controlled spec whose two stages are the same affine system."""
    if A is None:
        A = preset("pd_buck").A1
    B = np.zeros((len(A), 2))
    B[:, 0] = np.asarray(b) / 20.0
    return ConverterSpec(A1=A, A2=A, B1=B, B2=B, E1=[0.0, 1.0], E2=[0.0, 1.0],
                         u=[20.0, 0.0], T=T,
                         control=RampControl(C=C, D=D, ramp=Ramp(ramp[0], ramp[1], T)))
