"""Tests for the trace oracles: classification, effectiveness, audit
verdicts, linearizability checking and the explicit construction."""

from auditmem.substrate import run_schedule, run_to_completion
from auditmem.systems import make_system
from auditmem.verify import (check_trace_linearizable, classify_operations,
                             construct_from_trace, detect_effective,
                             spec_for_trace_meta, trace_invariant_violations,
                             verify_audit)


def _trace(scripts, kind="register", seed=1, order=None):
    system = make_system(kind, scripts, seed=seed)
    return run_to_completion(system, order=order)


def test_classify_sequential_run():
    trace = _trace({0: [("write", 5)], 1: [("read", None), ("read", None)],
                    2: [("audit", None)]})
    cls = classify_operations(trace)
    assert cls[(0, 0)][0] == "visible-write"
    assert cls[(1, 0)][0] == "direct-read"
    assert cls[(1, 1)][0] == "silent-read"
    assert cls[(2, 0)][0] == "audit"


def test_classify_overtaken_write_silent():
    scripts = {0: [("write", 5)], 1: [("write", 7)]}
    system = make_system("register", scripts, seed=1)
    schedule = [0] + [1] * 10 + [0] * 10
    trace = run_schedule(system, schedule, lenient=True)
    cls = classify_operations(trace)
    assert cls[(1, 0)][0] == "visible-write"
    assert cls[(0, 0)][0] == "silent-write"


def test_detect_effective_grows_with_prefix():
    """Effectiveness is monotone in the prefix: once a read is effective
    it stays effective."""
    trace = _trace({0: [("write", 5)], 1: [("read", None)]})
    seen: frozenset = frozenset()
    for cut in range(len(trace.events) + 1):
        eff = detect_effective(trace, cut)
        assert eff >= seen
        seen = eff
    assert seen == frozenset({((1, 0), 5)})


def test_silent_read_is_effective_at_its_single_step():
    trace = _trace({0: [("write", 5)],
                    1: [("read", None), ("read", None)]})
    eff = detect_effective(trace)
    assert eff == frozenset({((1, 0), 5), ((1, 1), 5)})


def test_verify_audit_passes_on_real_traces():
    trace = _trace({0: [("write", 5)], 1: [("read", None)],
                    2: [("audit", None)]})
    assert verify_audit(trace).ok
    assert trace_invariant_violations(trace) == []


def test_check_linearizable_pass_and_witness():
    trace = _trace({0: [("write", 5)], 1: [("read", None)]})
    v = check_trace_linearizable(trace)
    assert v.ok
    assert "0:0" in v.detail and "1:0" in v.detail


def test_construction_agrees_with_search():
    trace = _trace({0: [("write", 5), ("write", 7)],
                    1: [("read", None)], 2: [("audit", None)]})
    order, verdict = construct_from_trace(trace)
    assert verdict.ok
    assert check_trace_linearizable(trace).ok
    opids = [f.opid for f in order]
    assert set(opids) == {(0, 0), (0, 1), (1, 0), (2, 0)}


def test_construction_respects_real_time():
    """Anything completed before another op's invocation stays before it
    in the constructed order."""
    trace = _trace({0: [("write", 5)], 1: [("read", None)],
                    2: [("audit", None)]})
    order, verdict = construct_from_trace(trace)
    assert verdict.ok
    pos = {f.opid: i for i, f in enumerate(order)}
    for f in order:
        for before in f.preceding:
            assert pos[before] < pos[f.opid]


def test_spec_context_register_semantics():
    trace = _trace({0: [("write", 5)], 1: [("read", None)]})
    spec = spec_for_trace_meta(trace.meta)
    value = spec.init_value()
    value, pairs, _out = spec.apply(value, frozenset(), _fact_like("write", 5))
    _value, pairs, out = spec.apply(value, pairs, _fact_like("read", None))
    assert out == 5
    assert ((1, 0), 5) not in pairs  # pairs key reads by operation id


def _fact_like(kind, arg):
    from auditmem.verify import OpFact
    pid = 0 if kind == "write" else 1
    return OpFact(opid=(pid, 0), kind=kind, pid=pid,
                  j=0 if kind == "read" else None,
                  comp=None, arg=arg, result=None, status="done", cls=None,
                  sn=None, preceding=frozenset(), snread_idx=None,
                  venc=None, vn=None)


def test_oracles_cover_every_object_kind():
    configs = {
        "register": {0: [("write", 5)], 1: [("read", None)],
                     2: [("audit", None)]},
        "maxreg": {0: [("write_max", 5)], 1: [("read", None)],
                   2: [("audit", None)]},
        "snapshot": {0: [("update", 4)], 1: [("scan", None)],
                     2: [("audit", None)]},
        "counter": {0: [("update", 0)], 1: [("read", None)],
                    2: [("audit", None)]},
        "clock": {0: [("update", 3)], 1: [("read", None)],
                  2: [("audit", None)]},
    }
    for kind, scripts in configs.items():
        trace = _trace(scripts, kind=kind)
        assert trace_invariant_violations(trace) == [], kind
        assert verify_audit(trace).ok, kind
        assert check_trace_linearizable(trace).ok, kind
        _order, verdict = construct_from_trace(trace)
        assert verdict.ok, kind
