import json

import pytest

from supplyrestore import data_path, example_network
from supplyrestore.world import Scenario

CRITERIA = {
    1: "session reproduction (four plans in order, final fed/unfed split)",
    2: "initial belief has exactly 5 candidates",
    3: "fewer than 100 plans for every session candidate",
    4: "12-63-16 more probable than below-11 with AC 11 liar after CB 1 re-trip",
    5: "oracle equivalence on random toy networks (planner set, posterior)",
    6: "belief conservation over the session corpus",
    7: "Monte Carlo robustness over 1000 seeded scenarios",
}

_results: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    for n in getattr(report, "criteria", ()):
        _results.setdefault(n, []).append((report.nodeid, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    report.criteria = [m.args[0] for m in item.iter_markers("criterion")]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, label in CRITERIA.items():
        runs = _results.get(n)
        if not runs:
            tr.write_line(f"criterion {n}: NOT RUN  {label}")
            continue
        ok = all(outcome == "passed" for _, outcome in runs)
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {label}")


@pytest.fixture(scope="session")
def topo():
    return example_network()


@pytest.fixture(scope="session")
def sample_scenario():
    return Scenario.from_dict(json.loads(data_path("sample_session.json").read_text()))


@pytest.fixture(scope="session")
def default_config_doc():
    return json.loads(data_path("default_config.json").read_text())
