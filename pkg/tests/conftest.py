import numpy as np
import pytest

from qkck.manifolds import flat_model, hpn_chart_model

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def hpn():
    return hpn_chart_model(2)


@pytest.fixture(scope="session")
def flat():
    return flat_model(2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
