import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion covered by a test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    item_marks = getattr(report, "criterion_label", None)
    if item_marks is None:
        return
    details = [str(v) for k, v in report.user_properties if k == "measured"]
    _CRITERIA.setdefault(item_marks, []).append((report.nodeid, report.outcome, details))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion_label = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    def key(label):
        head = "".join(ch for ch in label if ch.isdigit())
        return (int(head or 0), label)
    for label in sorted(_CRITERIA, key=key):
        results = _CRITERIA[label]
        ok = all(outcome == "passed" for _, outcome, _ in results)
        failed = [nid.split("::")[-1] for nid, outcome, _ in results if outcome != "passed"]
        line = f"criterion {label:<3} {'PASS' if ok else 'FAIL'}  ({len(results)} checks)"
        if failed:
            line += "  failing: " + ", ".join(failed)
        tr.write_line(line)
        for _, _, details in results:
            for d in details:
                tr.write_line(f"    {d}")
