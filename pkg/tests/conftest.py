import numpy as np
import pytest

from dynrisk.cohort import small_schema

ACCEPTANCE = {}


def record_acceptance(key: str, title: str, passed: bool, detail: str = ""):
    ACCEPTANCE[key] = (title, passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[2:])):
        title, passed, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if passed else 'FAIL'}  {title}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_schema():
    return small_schema(["a", "b", "c"], ["s"])
