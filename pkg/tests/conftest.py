import json
from pathlib import Path

import pytest

NETWORKS = Path(__file__).resolve().parent.parent / "networks"


def network_path(name):
    return NETWORKS / f"{name}.json"


def network_doc(name):
    return json.loads(network_path(name).read_text())


@pytest.fixture
def dimer():
    from momentbound.netspec import load_network
    return load_network(network_path("dimerization"))


@pytest.fixture
def birth_death():
    from momentbound.netspec import load_network
    return load_network(network_path("birth_death"))


# one line per acceptance criterion, printed after the run
CRITERIA = {}


def record(number, ok, detail):
    CRITERIA[number] = (ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
