from pathlib import Path

import pytest

# criterion number -> (title, [outcomes], [notes])
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    num = getattr(report, "criterion", None)
    if num is None:
        return
    entry = _CRITERIA.setdefault(num, [report.criterion_title, [], []])
    entry[1].append(report.passed)
    entry[2].extend(getattr(report, "criterion_notes", []))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        rep.criterion = marker.args[0]
        rep.criterion_title = marker.args[1]
        rep.criterion_notes = list(getattr(item, "_criterion_notes", []))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, outcomes, notes = _CRITERIA[num]
        status = "PASS" if outcomes and all(outcomes) else "FAIL"
        tr.write_line(f"[{status}] criterion {num}: {title}")
        for n in notes:
            tr.write_line(f"         {n}")


@pytest.fixture
def note(request):
    """Attach a line to the acceptance summary of the current test."""
    notes = []
    request.node._criterion_notes = notes
    return notes.append


@pytest.fixture(scope="session")
def cache_dir(request):
    return Path(request.config.cache.mkdir("nlfv-references"))
