from pathlib import Path

import numpy as np
import pytest

from gridcert import build_model, load_case
from gridcert.netmodel import Mode

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "fixtures"

# 21-node grid rows: from, to, r, P, inv_C
IEEE21_ROWS = [
    (1, 2, 0.0053, -0.70, 0.05), (1, 3, 0.0054, 0.00, 0.00), (3, 4, 0.0054, -0.36, 0.08),
    (4, 5, 0.0063, -0.04, 0.06), (4, 6, 0.0051, 0.36, 0.07), (3, 7, 0.0037, 0.00, 0.00),
    (7, 8, 0.0079, -0.32, 0.08), (7, 9, 0.0072, 0.80, 0.07), (3, 10, 0.0053, 0.00, 0.00),
    (10, 11, 0.0038, -0.45, 0.06), (11, 12, 0.0079, -0.68, 0.08), (11, 13, 0.0078, 0.10, 0.05),
    (10, 14, 0.0083, 0.00, 0.00), (14, 15, 0.0065, 0.22, 0.06), (15, 16, 0.0064, -0.23, 0.05),
    (16, 17, 0.0074, 0.43, 0.06), (16, 18, 0.0081, -0.34, 0.08), (14, 19, 0.0078, 0.09, 0.09),
    (19, 20, 0.0084, 0.21, 0.07), (19, 21, 0.0082, 0.21, 0.07),
]

_acceptance = {}


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance" in report.nodeid:
        _acceptance[report.nodeid.split("::")[-1]] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance.items():
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")


@pytest.fixture(scope="session")
def ieee21():
    return load_case(FIXTURES / "ieee21.csv")


@pytest.fixture(scope="session")
def ieee21_ms(ieee21):
    return build_model(ieee21, Mode.MASTER_SLAVE)


@pytest.fixture(scope="session")
def ieee21_island(ieee21):
    return build_model(ieee21, Mode.ISLAND)


@pytest.fixture(scope="session")
def ieee21_island_ref():
    return build_model(load_case(FIXTURES / "ieee21_island_ref.csv"))


@pytest.fixture
def rng():
    return np.random.default_rng(20180101)


def two_node_text(r=0.01, p=-0.1, inv_c=0.0, v_master=1.0):
    return f"#master 1 {v_master}\nfrom,to,r,P,inv_C\n1,2,{r},{p},{inv_c}\n"
