import numpy as np
import pytest

from mvtraffic.trace import GopPattern, MultiviewTrace, Representation, TraceMeta


def make_trace(views, psnr=None, fps=24.0, gop=2, rep=None, name="t", qp=None):
    """Build a trace straight from per-view size lists."""
    V = len(views)
    M = len(views[0])
    if rep is None:
        rep = Representation.MV if V == 2 else Representation.SBS
    meta = TraceMeta(name, rep, V, M, fps, gop, GopPattern.B1, qp)
    types = tuple("U" * len(v) for v in views)
    return MultiviewTrace(meta, tuple(np.asarray(v) for v in views), types,
                          tuple(np.asarray(p, dtype=float) for p in psnr) if psnr else None)


@pytest.fixture
def small_mv():
    return make_trace([[4, 2], [2, 0]])


_acceptance = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and (
            report.when == "call" or (report.when == "setup" and report.outcome != "passed")):
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _acceptance:
        tag = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome)
        terminalreporter.write_line(f"[{tag}] {name}")
