"""Mutated-trace fixtures: known-bad inputs every oracle must reject.

Each fixture starts from a recorded good trace and tampers with exactly
one aspect (a response, a fetched word, an extra step, a control-word
argument) chosen so that one named oracle fails on it.  The fixtures are
bundled under ``tests/fixtures`` and regenerated deterministically with::

    python3 -m auditmem.fixtures [output-dir]
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from .register import Layout
from .substrate import CAS, READ, RESPOND, Event, Trace, run_to_completion
from .systems import make_system

DEFAULT_DIR = Path(__file__).resolve().parents[2] / "tests" / "fixtures"


def _register_trace(seed: int = 13) -> Trace:
    system = make_system("register", {0: [("write", 5)],
                                      1: [("read", None)],
                                      2: [("audit", None)]}, seed=seed)
    return run_to_completion(system)


def _register_trace_two_writes(seed: int = 13) -> Trace:
    system = make_system("register", {0: [("write", 5), ("write", 7)],
                                      1: [("read", None), ("read", None)],
                                      2: [("audit", None)]}, seed=seed)
    return run_to_completion(system)


def _maxreg_trace(seed: int = 13) -> Trace:
    system = make_system("maxreg", {0: [("write_max", 5)],
                                    1: [("write_max", 3)],
                                    2: [("read", None)]}, seed=seed)
    return run_to_completion(system)


def _audit_first_trace(seed: int = 13) -> Trace:
    """Audit completes before the write installs anything, so erasing the
    later read leaves the auditor's projection untouched (a passing
    replay baseline)."""
    system = make_system("register", {0: [("write", 5)],
                                      1: [("read", None)],
                                      2: [("audit", None)]}, seed=seed)
    return run_to_completion(system, order=[2, 0, 1])


def _edit(trace: Trace, predicate, transform, which: int = 0,
          meta=None) -> Trace:
    events = list(trace.events)
    hits = [i for i, e in enumerate(events) if predicate(e)]
    i = hits[which]
    events[i] = transform(events[i])
    new_meta = dict(trace.meta)
    if meta:
        new_meta.update(meta)
    return dataclasses.replace(trace, events=events, meta=new_meta)


def _insert_after(trace: Trace, predicate, make_events) -> Trace:
    events = list(trace.events)
    i = next(k for k, e in enumerate(events) if predicate(e))
    extra = make_events(events[i])
    out = events[:i + 1] + extra + events[i + 1:]
    out = [e._replace(step=k) for k, e in enumerate(out)]
    return dataclasses.replace(trace, events=out, meta=dict(trace.meta))


def _is_audit_respond(e: Event) -> bool:
    return e.kind == RESPOND and e.op.startswith("AUDIT") and e.arg


def _is_read_respond(e: Event) -> bool:
    return e.kind == RESPOND and e.op.startswith("READ")


def _drop_pair(e: Event) -> Event:
    return e._replace(arg=frozenset(list(sorted(e.arg))[1:]))


def _add_pair(e: Event) -> Event:
    return e._replace(arg=e.arg | {(0, 99)})


def _swap_pair_value(e: Event) -> Event:
    pairs = sorted(e.arg)
    j, _v = pairs[0]
    return e._replace(arg=frozenset([(j, 98)] + pairs[1:]))


def _reseq_install(trace: Trace, bump: int) -> Trace:
    layout = Layout(trace.m, 32)

    def is_install(e: Event) -> bool:
        return (e.kind == CAS and e.cell == "R"
                and layout.unpack(e.arg[1])[0]
                > layout.unpack(e.arg[0])[0])

    def transform(e: Event) -> Event:
        seq, val, bits = layout.unpack(e.arg[1])
        word = layout.pack(seq + bump, val, bits)
        return e._replace(arg=(e.arg[0], word), fetched=e.fetched)

    return _edit(trace, is_install, transform)


def _set_val_enc(e: Event, layout: Layout, enc: int) -> Event:
    seq, _val, bits = layout.unpack(e.fetched)
    return e._replace(fetched=layout.pack(seq, enc, bits))


def build_all() -> dict[str, tuple[str, Trace]]:
    """name -> (oracle that must fail, mutated trace)."""
    out: dict[str, tuple[str, Trace]] = {}
    layout32 = Layout(1, 32)

    # verify_audit: tampered audit responses (a dropped pair breaks
    # completeness, an invented or altered pair breaks accuracy).
    base = _register_trace()
    out["verify_audit-drop-pair"] = (
        "verify_audit", _edit(base, _is_audit_respond, _drop_pair))
    out["verify_audit-extra-pair"] = (
        "verify_audit", _edit(base, _is_audit_respond, _add_pair))
    out["verify_audit-wrong-value"] = (
        "verify_audit", _edit(base, _is_audit_respond, _swap_pair_value))

    # trace_invariants: a read stretched past its step budget, an install
    # that skips a sequence number, a published sequence number that skips.
    def extra_sn_reads(e: Event):
        return [e._replace(step=0), e._replace(step=0)]

    def is_first_read_step(e: Event) -> bool:
        return e.kind == READ and e.cell == "SN" and e.op.startswith("READ")

    out["trace_invariants-read-steps"] = (
        "trace_invariants",
        _insert_after(base, is_first_read_step, extra_sn_reads))
    out["trace_invariants-seq-skip"] = (
        "trace_invariants", _reseq_install(base, 1))

    def is_sn_cas(e: Event) -> bool:
        return e.kind == CAS and e.cell == "SN"

    out["trace_invariants-sn-skip"] = (
        "trace_invariants",
        _edit(base, is_sn_cas, lambda e: e._replace(arg=(e.arg[0],
                                                         e.arg[1] + 1))))

    # check_linearizable: responses no sequential execution can produce.
    out["check_linearizable-unwritten"] = (
        "check_linearizable",
        _edit(base, _is_read_respond, lambda e: e._replace(arg=99)))
    out["check_linearizable-stale"] = (
        "check_linearizable",
        _edit(base, _is_read_respond, lambda e: e._replace(arg=0)))
    out["check_linearizable-bad-audit"] = (
        "check_linearizable",
        _edit(base, _is_audit_respond,
              lambda e: e._replace(arg=frozenset({(0, 99)}))))

    # construct_linearization replays the constructed order against the
    # sequential semantics, so impossible responses surface there too.
    base2 = _register_trace_two_writes()
    out["construct_linearization-unwritten"] = (
        "construct_linearization",
        _edit(base2, _is_read_respond, lambda e: e._replace(arg=99)))
    out["construct_linearization-stale"] = (
        "construct_linearization",
        _edit(base2, _is_read_respond, lambda e: e._replace(arg=0),
              which=1))
    out["construct_linearization-bad-audit"] = (
        "construct_linearization",
        _edit(base2, _is_audit_respond, _drop_pair))

    # replay_uncompromised: traces whose recorded words disagree with what
    # the schedule reproduces, at events the applicability preconditions
    # deliberately ignore.
    rp = _audit_first_trace()
    obs_meta = {"fixture_observer": 2, "fixture_target": (1, 0)}

    def is_auditor_r_read(e: Event) -> bool:
        return e.pid == 2 and e.kind == READ and e.cell == "R"

    out["replay_uncompromised-forged-word"] = (
        "replay_uncompromised",
        _edit(rp, is_auditor_r_read,
              lambda e: _set_val_enc(e, layout32, 8), meta=obs_meta))

    rp2 = _register_trace_two_writes()

    def is_obs_read_respond(e: Event) -> bool:
        return e.pid == 1 and _is_read_respond(e)

    out["replay_uncompromised-forged-response"] = (
        "replay_uncompromised",
        _edit(rp2, is_obs_read_respond, lambda e: e._replace(arg=6), which=1,
              meta={"fixture_observer": 1, "fixture_target": (0, 0)}))

    mx = _maxreg_trace()

    def is_mx_read_respond(e: Event) -> bool:
        return e.pid == 2 and _is_read_respond(e)

    out["replay_uncompromised-forged-max"] = (
        "replay_uncompromised",
        _edit(mx, is_mx_read_respond, lambda e: e._replace(arg=4),
              meta={"fixture_observer": 2, "fixture_target": (1, 0)}))
    return out


def write_all(outdir: Path = DEFAULT_DIR) -> list[str]:
    outdir.mkdir(parents=True, exist_ok=True)
    names = []
    manifest = []
    for name, (oracle, trace) in sorted(build_all().items()):
        path = outdir / f"{name}.trace"
        path.write_text(trace.serialize())
        manifest.append(f"{name}.trace {oracle}")
        names.append(name)
    (outdir / "MANIFEST").write_text("\n".join(manifest) + "\n")
    good = _register_trace_two_writes()
    (outdir / "good-register.trace").write_text(good.serialize())
    return names


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else DEFAULT_DIR
    for n in write_all(target):
        print(n)
