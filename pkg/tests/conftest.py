"""Suite-level reporting: one verdict line per numbered acceptance check.

Functions named test_criterion_<n>* (across any module) are grouped by
number; a number passes only if every test carrying it passed.
"""

import re

_CRITERION = re.compile(r"test_criterion_(\d+)")

_results: dict[int, bool] = {}


def pytest_runtest_logreport(report):
    match = _CRITERION.search(report.nodeid)
    if match is None:
        return
    number = int(match.group(1))
    if report.when == "call":
        passed = report.passed
    elif report.failed:
        # setup or teardown error counts against the criterion
        passed = False
    else:
        return
    _results[number] = _results.get(number, True) and passed


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _results:
        return
    terminalreporter.section("acceptance checks")
    for number in sorted(_results):
        verdict = "PASS" if _results[number] else "FAIL"
        terminalreporter.write_line(f"ACCEPTANCE {number}: {verdict}")
