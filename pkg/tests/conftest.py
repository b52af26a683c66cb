"""Acceptance bookkeeping.

Tests tagged ``@pytest.mark.criterion(n)`` count towards acceptance
criterion ``n``; the terminal summary prints one PASS/FAIL line per
criterion (FAIL if any of its tests failed or none ran).  Tests can attach a
short measured value through the ``measured`` fixture.
"""
import os
import sys
from collections import defaultdict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

CRITERIA = {
    1: "dispersive-shift formula",
    2: "cooperativity inversion",
    3: "end-to-end spectrum pipeline",
    4: "sqrt(N) collective Rabi",
    5: "blockade quality",
    6: "free spectral range",
    7: "electrostatics solver",
    8: "shielding",
    9: "fit round trips",
    10: "detection statistics round trip",
    11: "sideband thermometry",
    12: "holography",
    13: "CLI determinism",
    14: "property suites",
}

_outcomes = defaultdict(list)
_notes = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): counts towards acceptance criterion n")


@pytest.fixture
def measured(request):
    marker = request.node.get_closest_marker("criterion")

    def note(text):
        if marker is not None:
            _notes[marker.args[0]].append(text)
        print(text)

    return note


def pytest_runtest_logreport(report):
    marker_ids = getattr(report, "_criteria", None)
    if marker_ids is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        for cid in marker_ids:
            _outcomes[cid].append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    ids = [m.args[0] for m in item.iter_markers("criterion")]
    if ids:
        rep._criteria = ids


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, title in CRITERIA.items():
        results = _outcomes.get(cid, [])
        if not results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        line = f"ACCEPTANCE C{cid:02d} {status:7s} {title} ({sum(results)}/{len(results)} tests)"
        if _notes.get(cid):
            line += " | " + "; ".join(_notes[cid])
        tr.write_line(line)
