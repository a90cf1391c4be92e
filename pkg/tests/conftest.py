"""Collects the acceptance verdicts and prints one line per criterion at the end of the run."""

import pytest

CRITERIA = {
    1: "pyramid exactness",
    2: "feature oracles",
    3: "metric oracle equivalence",
    4: "classifier sanity",
    5: "fusion invariants",
    6: "determinism",
    7: "end-to-end synthetic",
    8: "protocol coverage",
}
_verdicts = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records the verdict for criterion n and returns ok."""

    def record(n, ok, detail=""):
        prev = _verdicts.get(n)
        ok = bool(ok) and (prev is None or prev[0])
        details = "; ".join(d for d in ((prev[1] if prev else ""), detail) if d)
        _verdicts[n] = (ok, details)
        return ok

    return record


def pytest_runtest_logreport(report):
    # an acceptance test that errors or fails before recording still counts as FAIL
    if report.when == "call" and report.failed and "test_acceptance" in report.nodeid:
        n = getattr(report, "criterion_number", None)
        if n is not None and n not in _verdicts:
            _verdicts[n] = (False, "test failed before recording a verdict")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion_number = marker.args[0]


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        if n not in _verdicts:
            continue
        ok, detail = _verdicts[n]
        tr.write_line(f"criterion {n} {'PASS' if ok else 'FAIL'}: {name}" + (f" ({detail})" if detail else ""))
