import numpy as np
import pytest

from wasgd import RngStream


@pytest.fixture
def rng():
    return RngStream(2024, 0)


def random_spd(gen, d):
    m = gen.standard_normal((d, d))
    return m @ m.T + d * np.eye(d)


# acceptance criteria append (number, name, passed, detail) here
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:>2}. {name}: {detail}")
