import numpy as np
import pytest

from hpgcg.rof import RofInstance


def random_instance(seed, p=8, alpha=0.1):
    return RofInstance(np.random.default_rng(seed).random((p, p)), alpha)


@pytest.fixture
def rof8():
    return random_instance(0)


# acceptance criteria append (criterion, verdict, detail) here; printed at session end
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"{name}: {'PASS' if ok else 'FAIL'}  {detail}")
