import pytest

_results: dict[int, tuple[str, str, float, float]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when != "call":
        return
    number, title, limit = marker.args
    status = "PASS" if report.passed else "FAIL"
    _results[number] = (title, status, report.duration, limit)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, status, duration, limit = _results[number]
        terminalreporter.write_line(f"[{status}] {number}. {title} ({duration:.2f} s, limit {limit:g} s)")
