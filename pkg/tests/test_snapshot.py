"""Behavioral tests for the auditable snapshot."""

from auditmem.explore import explore
from auditmem.snapshot import BOT
from auditmem.substrate import RESPOND, run_schedule, run_to_completion
from auditmem.systems import make_system


def _results(trace, pid):
    return [e.arg for e in trace.events if e.kind == RESPOND and e.pid == pid]


def test_scan_of_fresh_snapshot_is_empty():
    system = make_system("snapshot", {0: [("update", 4)],
                                      1: [("scan", None)]}, seed=1)
    trace = run_schedule(system, [1] * 6, lenient=True)
    assert _results(trace, 1) == [(BOT,)]


def test_scan_sees_completed_updates():
    system = make_system("snapshot", {0: [("update", 4)],
                                      1: [("update", 9)],
                                      2: [("scan", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 2) == [(4, 9)]


def test_second_update_to_same_component_wins():
    system = make_system("snapshot", {0: [("update", 4), ("update", 6)],
                                      1: [("scan", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 1) == [(6,)]


def test_scan_view_version_never_regresses():
    """Consecutive scans by one process observe non-decreasing versions;
    a fresh update strictly raises the version the next scan sees."""
    from auditmem.substrate import step_process
    scripts = {0: [("update", 4), ("update", 6)],
               1: [("scan", None), ("scan", None), ("scan", None)]}
    system = make_system("snapshot", scripts, seed=1)
    views = []
    obs = lambda ev, proc: views.append(ev.arg) if (
        ev.kind == RESPOND and ev.pid == 1) else None

    def run_one_op(pid):
        proc = system.proc(pid)
        start = proc.idx
        while proc.runnable() and proc.idx == start:
            step_process(system, proc, None, obs)

    run_one_op(0)  # update 4
    run_one_op(1)
    run_one_op(1)
    run_one_op(0)  # update 6
    run_one_op(1)
    assert views == [(4,), (4,), (6,)]


def test_audit_reports_views():
    system = make_system("snapshot", {0: [("update", 4)],
                                      1: [("update", 9)],
                                      2: [("scan", None)],
                                      3: [("audit", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 3) == [frozenset({(0, (4, 9))})]


def test_exhaustive_two_updaters_clean():
    result = explore(lambda: make_system(
        "snapshot", {0: [("update", 4)], 1: [("update", 9)],
                     2: [("scan", None)]}, seed=1), track_history=False)
    assert result.ok


def test_components_flag_allows_spare_components():
    system = make_system("snapshot", {0: [("update", 4)],
                                      1: [("scan", None)]}, seed=1,
                         components=3)
    trace = run_to_completion(system)
    assert _results(trace, 1) == [(4, BOT, BOT)]
