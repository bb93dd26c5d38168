import numpy as np
import pytest

from mfld.ensemble import ParticleEnsemble

ACCEPTANCE_LINES: dict[int, str] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"[{'PASS' if ok else 'FAIL'}] acceptance {criterion:>2}: {detail}"
    print(ACCEPTANCE_LINES[criterion])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def ens():
    def make(rows, step=0):
        return ParticleEnsemble(np.asarray(rows, dtype=np.float64), step)

    return make
