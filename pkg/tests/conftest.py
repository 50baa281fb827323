import os

import pytest
from hypothesis import HealthCheck, settings

from aqcep.aqi import default_table
from aqcep.rules import bundled_rules
from aqcep.synthetic import synthetic_events

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture(scope="session")
def standard_rules():
    return bundled_rules("standard.rules")


@pytest.fixture(scope="session")
def events_500():
    return synthetic_events(500, seed=3)


@pytest.fixture
def sample_csv():
    return os.path.join(FIXTURES, "sample_500.csv")


# Acceptance gate: one PASS/FAIL line per criterion, printed after the run.

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to an acceptance criterion")


def pytest_runtest_logreport(report):
    marker = getattr(report, "_acceptance", None)
    if marker is None:
        return
    number, title = marker
    entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "details": []})
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False
    if report.when == "call":
        entry["details"] += [v for k, v in report.user_properties if k == "detail"]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    m = item.get_closest_marker("acceptance")
    if m is not None:
        outcome.get_result()._acceptance = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[number]
        tr.write_line(f"[{'PASS' if entry['ok'] else 'FAIL'}] {number:>2}. {entry['title']}")
        for d in entry["details"]:
            tr.write_line(f"        {d}")
