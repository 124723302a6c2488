import pytest

from compact_posg import lp
from compact_posg.graph import chain, make_dag

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def k4():
    return chain(4)


@pytest.fixture
def complete4():
    return make_dag(4, [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)])


@pytest.fixture
def shortcut4():
    """Chain on four vertices plus the shortcut (1, 3)."""
    return make_dag(4, [(1, 2), (1, 3), (2, 3), (3, 4)])


@pytest.fixture(autouse=True)
def lp_self_check():
    """Every optimal LP solved during a test must close the duality gap."""
    yield
    assert lp.STATS.max_gap <= lp.GAP_TOL, f"LP duality gap {lp.STATS.max_gap:g}"
    assert lp.STATS.max_infeasibility <= lp.FEAS_TOL


def lp_check_line():
    s = lp.STATS
    ok = s.violations == 0 and s.max_gap <= lp.GAP_TOL
    return ok, (f"{s.optimal} optimal solves of {s.solves}, max duality gap {s.max_gap:.2e}, "
                f"{s.violations} over tolerance")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    if 9 in ACCEPTANCE:
        # the LP check covers every solve of the session, not only those before it ran
        ACCEPTANCE[9] = lp_check_line()
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
