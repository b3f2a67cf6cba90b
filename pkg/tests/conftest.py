"""Shared test plumbing: per-criterion summary lines for the acceptance suite."""
import re

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    match = re.search(r"test_acceptance\.py.*criterion_(\d+[a-z]?)", report.nodeid)
    if match:
        _ACCEPTANCE_RESULTS[match.group(1)] = report.outcome.upper()


def pytest_runtest_logfinish(nodeid, location):
    pass


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE_RESULTS, key=lambda k: (len(k), k)):
        terminalreporter.write_line(f"criterion {key}: {_ACCEPTANCE_RESULTS[key]}")


def pytest_collection_modifyitems(items):
    # run the acceptance module last so unit failures surface first
    items.sort(key=lambda item: item.fspath.basename == "test_acceptance.py")
