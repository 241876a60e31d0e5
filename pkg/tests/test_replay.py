"""Tests for the indistinguishability replay transformations."""

import random

from auditmem.replay import (applicable_targets, projection_bytes,
                             replay_uncompromised)
from auditmem.substrate import run_schedule, run_to_completion, step_process
from auditmem.systems import make_system


def _trace(scripts, kind="register", seed=1, order=None):
    return run_to_completion(make_system(kind, scripts, seed=seed),
                             order=order)


def _random_trace(scripts, kind, seed, rng):
    system = make_system(kind, scripts, seed=seed)
    schedule = []
    while any(p.runnable() for p in system.processes):
        pid = rng.choice([p.pid for p in system.processes if p.runnable()])
        schedule.append(pid)
        step_process(system, system.proc(pid), None)
    return run_schedule(make_system(kind, scripts, seed=seed), schedule)


def test_projection_is_per_process():
    trace = _trace({0: [("write", 5)], 1: [("read", None)]})
    assert projection_bytes(trace, 0) != projection_bytes(trace, 1)
    assert b"respond" in projection_bytes(trace, 1)


def test_unseen_write_can_be_substituted():
    """A write nobody read can be replaced without the reader noticing."""
    # the reader finishes before the write starts, so it saw the initial
    # value only
    scripts = {0: [("write", 5)], 1: [("read", None)]}
    trace = _trace(scripts, order=[1, 0])
    v = replay_uncompromised(trace, 1, (0, 0))
    assert v.status == "pass", v.detail


def test_seen_write_is_not_applicable():
    trace = _trace({0: [("write", 5)], 1: [("read", None)]}, order=[0, 1])
    v = replay_uncompromised(trace, 1, (0, 0))
    assert v.status == "n/a"


def test_unobserved_read_can_be_erased():
    """An auditor that audited before the read happened cannot tell the
    erased run apart."""
    scripts = {0: [("write", 5)], 1: [("read", None)], 2: [("audit", None)]}
    trace = _trace(scripts, order=[2, 0, 1])
    v = replay_uncompromised(trace, 2, (1, 0))
    assert v.status == "pass", v.detail


def test_audited_read_is_not_applicable():
    """Once the audit lists the reader's pair, erasing that read is
    legitimately detectable."""
    scripts = {0: [("write", 5)], 1: [("read", None)], 2: [("audit", None)]}
    trace = _trace(scripts, order=[0, 1, 2])
    v = replay_uncompromised(trace, 2, (1, 0))
    assert v.status == "n/a"


def test_observer_cannot_target_itself():
    trace = _trace({0: [("write", 5)], 1: [("read", None)]})
    assert replay_uncompromised(trace, 1, (1, 0)).status == "n/a"


def test_maxreg_overwritten_write_can_be_renumbered():
    """A smaller write_max that lost to a bigger one leaves no mark the
    reader can pin to its input."""
    scripts = {0: [("write_max", 5)], 1: [("write_max", 3)],
               2: [("read", None)]}
    trace = _trace(scripts, kind="maxreg", order=[0, 1, 2])
    v = replay_uncompromised(trace, 2, (1, 0))
    assert v.status == "pass", v.detail


def test_snapshot_unscanned_update_can_be_swapped():
    scripts = {0: [("update", 4)], 1: [("update", 9)], 2: [("scan", None)]}
    trace = _trace(scripts, kind="snapshot", order=[2, 0, 1])
    v = replay_uncompromised(trace, 2, (1, 0))
    assert v.status == "pass", v.detail


def test_snapshot_scanned_update_is_not_applicable():
    scripts = {0: [("update", 4)], 1: [("update", 9)], 2: [("scan", None)]}
    trace = _trace(scripts, kind="snapshot", order=[0, 1, 2])
    v = replay_uncompromised(trace, 2, (1, 0))
    assert v.status == "n/a"


def test_no_failures_across_random_interleavings():
    """Every applicable transformation yields byte-identical observer
    projections over a random corpus of all three object families."""
    rng = random.Random(5)
    corpora = {
        "register": {0: [("write", 2)], 1: [("write", 4)],
                     2: [("read", None)], 3: [("audit", None)]},
        "maxreg": {0: [("write_max", 2)], 1: [("write_max", 4)],
                   2: [("read", None)], 3: [("audit", None)]},
        "snapshot": {0: [("update", 2)], 1: [("update", 4)],
                     2: [("scan", None)], 3: [("audit", None)]},
    }
    statuses = {"pass": 0, "n/a": 0, "fail": 0}
    for kind, scripts in corpora.items():
        for i in range(12):
            trace = _random_trace(scripts, kind, seed=i + 1, rng=rng)
            for obs, target in applicable_targets(trace):
                v = replay_uncompromised(trace, obs, target)
                statuses[v.status] += 1
                assert v.status != "fail", (kind, obs, target, v.detail)
    assert statuses["pass"] > 50
