import numpy as np
import pytest

from relmap.dataset import synthesize

_RANK = {"passed": 0, "skipped": 1, "failed": 2}
_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (report.when != "call" and report.passed):
        return
    number, title = mark.args
    entry = _criteria.setdefault(number, {"title": title, "outcome": "passed", "tests": 0})
    if report.when == "call":
        entry["tests"] += 1
    if _RANK[report.outcome] > _RANK[entry["outcome"]]:
        entry["outcome"] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        e = _criteria[number]
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[e["outcome"]]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {e['title']} ({e['tests']} tests)")


@pytest.fixture(scope="session")
def small_synth():
    return synthesize(n_sensors=30, n_steps=64, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
