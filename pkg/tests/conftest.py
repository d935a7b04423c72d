import numpy as np
import pytest

from arnold_diffusion.model import ModelParams


@pytest.fixture(scope="session")
def arnold_small_mu():
    return ModelParams(epsilon=0.25, mu=1e-3)


@pytest.fixture(scope="session")
def unperturbed():
    return ModelParams(epsilon=0.25, mu=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = {}


@pytest.fixture
def report():
    """Record one pass/fail line per acceptance criterion and echo it immediately."""

    def _report(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
