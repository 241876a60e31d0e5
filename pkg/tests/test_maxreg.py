"""Behavioral tests for the auditable max register."""

from auditmem.explore import explore
from auditmem.maxreg import MaxShared, max_layout
from auditmem.pads import DEFAULT_TEST_SEED, PadCipher, PadKey
from auditmem.substrate import CAS, RESPOND, run_schedule, run_to_completion
from auditmem.systems import make_system


def _results(trace, pid):
    return [e.arg for e in trace.events if e.kind == RESPOND and e.pid == pid]


def test_encoding_orders_by_payload_then_nonce_then_writer():
    sh = MaxShared(max_layout(1), PadCipher(PadKey.from_seed(1), 1))
    assert sh.enc_nonced(3, 1, 0) < sh.enc_nonced(5, 1, 0)
    assert sh.enc_nonced(5, 1, 0) < sh.enc_nonced(5, 2, 0)
    assert sh.enc_nonced(5, 2, 0) < sh.enc_nonced(5, 2, 1)
    payload, nonce, writer = sh.split(sh.enc_nonced(5, 2, 1))
    assert (payload, nonce, writer) == (5, 2, 1)


def test_read_returns_largest_written():
    system = make_system("maxreg", {0: [("write_max", 3)],
                                    1: [("write_max", 5)],
                                    2: [("read", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 2) == [5]


def test_smaller_write_has_no_effect():
    system = make_system("maxreg", {0: [("write_max", 5), ("write_max", 3)],
                                    1: [("read", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 1) == [5]


def test_equal_rewrite_is_fresh():
    """Re-writing the current maximum still counts as a new epoch: the
    nonce makes (v, n') exceed (v, n), so audits can attribute re-reads."""
    scripts = {0: [("write_max", 5), ("write_max", 5)],
               1: [("read", None), ("read", None)],
               2: [("audit", None)]}
    system = make_system("maxreg", scripts, seed=1)
    order = [0] * 16 + [1] * 5 + [0] * 16 + [1] * 5 + [2] * 8
    trace = run_schedule(system, order, lenient=True)
    assert _results(trace, 1) == [5, 5]
    installs = [e for e in trace.events
                if e.kind == CAS and e.cell == "R" and e.fetched == e.arg[0]]
    assert len(installs) == 2


def test_audit_reports_max_value_read():
    system = make_system("maxreg", {0: [("write_max", 5)],
                                    1: [("read", None)],
                                    2: [("audit", None)]}, seed=1)
    trace = run_to_completion(system)
    assert _results(trace, 2) == [frozenset({(0, 5)})]


def test_control_value_strictly_increases():
    """Every successful install raises the control encoding; the analyzer
    checks this on every explored edge."""
    result = explore(lambda: make_system(
        "maxreg", {0: [("write_max", 3)], 1: [("write_max", 5)],
                   2: [("read", None)]}, seed=1), track_history=False)
    assert result.ok


def test_per_writer_nonces_increase():
    system = make_system("maxreg", {0: [("write_max", 2), ("write_max", 4)]},
                         seed=1)
    run_to_completion(system)
    shared = system.shared
    mem = system.memory
    payload, nonce, writer = shared.split(
        shared.layout.unpack(mem.read(shared.R))[1])
    assert (payload, writer) == (4, 0)
    assert nonce == 2  # second draw by the same writer


def test_write_loop_terminates_under_contention():
    result = explore(lambda: make_system(
        "maxreg", {0: [("write_max", 3)], 1: [("write_max", 5)]}, seed=1))
    assert result.ok
    assert result.max_write_iters <= 4
