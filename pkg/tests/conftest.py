import pytest

from ecgnet.engine import set_precision

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.fixture(autouse=True)
def _float64():
    # tests that need 32-bit mode switch explicitly and get reset here
    set_precision(64)
    yield
    set_precision(64)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    prev = _CRITERIA.get(number, (title, "PASS", ""))
    if report.skipped:
        status = "SKIP"
        detail = str(report.longrepr[-1]) if isinstance(report.longrepr, tuple) else ""
    elif report.failed:
        status, detail = "FAIL", report.when
    else:
        if report.when != "call":
            return
        status, detail = "PASS", ""
    # a criterion spread over several tests fails if any of them fails
    rank = {"PASS": 0, "SKIP": 1, "FAIL": 2}
    if rank[status] >= rank[prev[1]]:
        _CRITERIA[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, detail = _CRITERIA[number]
        line = f"criterion {number}: {status:<4}  {title}"
        if status == "SKIP" and detail:
            line += f"  ({detail})"
        tr.write_line(line)
