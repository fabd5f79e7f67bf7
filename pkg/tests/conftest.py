import numpy as np
import pytest

from qsdac.kernel import SubMarkovKernel

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def random_kernel(rng, n, exit_scale=0.3):
    """Dense irreducible kernel with every row leaking up to ``exit_scale``."""
    P = rng.random((n, n))
    P /= P.sum(axis=1, keepdims=True)
    return SubMarkovKernel(P * (1.0 - exit_scale * rng.random(n))[:, None])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
