"""Indistinguishability replays: can an observer tell the run apart from
one in which a targeted operation never happened, or wrote something else?

Each transformation edits the recorded run (substitute a written value,
erase a tracked read together with its pad bits, renumber a max-register
write onto a smaller payload, swap an updated component value), re-executes
the original schedule against the edited system, and compares the
observer's projection of the two traces byte for byte.

The verdict is ``n/a`` when the preconditions fail: any word the observer
fetched, wrote or returned would change under the edit (then distinguishing
the runs is legitimate), or the schedule wires the targeted steps into
another process's control flow (a compare&swap that failed exactly because
of an erased announcement bit).  A ``fail`` means the observer could tell
two runs apart that the auditing guarantees say must look identical.
"""

from __future__ import annotations

from .pads import PadCipher, PadKey
from .substrate import (CAS, INVOKE, READ, RESPOND, WRITE, XOR, ScheduleError,
                        Trace, run_schedule, ser_val)
from .systems import OpSpec, make_system
from .verify import Verdict, analyze_trace

ORACLE = "replay_uncompromised"


def projection_bytes(trace: Trace, pid: int) -> bytes:
    lines = []
    for e in trace.project(pid):
        cell = e.cell if e.cell is not None else "-"
        lines.append(f"{e.pid} {e.kind} {e.op} {cell} "
                     f"{ser_val(e.arg)} {ser_val(e.fetched)}")
    return "\n".join(lines).encode()


def _scripts_of(meta: dict) -> dict:
    return {pid: [OpSpec(n, a, f) for (n, a, f) in ops]
            for pid, ops in meta["scripts"]}


def _rerun(trace: Trace, scripts: dict, cipher=None, lenient: bool = False):
    system = make_system(trace.meta["object"], scripts, seed=trace.seed,
                         v0=trace.meta["v0"], m=trace.m, cipher=cipher,
                         roles=trace.meta["roles"])
    return run_schedule(system, trace.meta["schedule"], lenient=lenient)


def _exposed(trace: Trace, observer: int, changed_word, changed_val):
    """First observer event whose recorded words the edit would alter.

    Invocation arguments are the observer's own inputs and never change,
    so only responses, fetched words and primitive arguments count."""
    for e in trace.events:
        if e.pid != observer:
            continue
        if e.kind == INVOKE:
            continue
        if e.kind == RESPOND:
            if changed_val(e.arg):
                return e
            continue
        if e.fetched is not None and changed_word(e, e.fetched, False):
            return e
        if e.kind == CAS:
            if changed_word(e, e.arg[0], False) or changed_word(e, e.arg[1],
                                                               True):
                return e
        elif e.kind == WRITE and changed_word(e, e.arg, True):
            return e
    return None


def _val_contains(value, hit) -> bool:
    if isinstance(value, (tuple, list, frozenset, set)):
        return any(_val_contains(v, hit) for v in value)
    return hit(value)


def replay_uncompromised(trace: Trace, observer: int, target: tuple) -> Verdict:
    """Dispatch on the kind of the targeted operation."""
    if observer == target[0]:
        return Verdict(ORACLE, "n/a", "observer owns the target operation")
    ana = analyze_trace(trace)
    fact = next((f for f in ana.facts() if f.opid == target), None)
    if fact is None:
        return Verdict(ORACLE, "n/a", f"no operation {target} in the trace")
    if fact.kind == "write":
        return _substitute_write(trace, ana, observer, fact)
    if fact.kind in ("read", "scan"):
        return _erase_read(trace, ana, observer, fact)
    if fact.kind == "write_max":
        return _renumber_write_max(trace, ana, observer, fact)
    if fact.kind == "update" and trace.meta["object"] == "snapshot":
        return _swap_component(trace, ana, observer, fact)
    return Verdict(ORACLE, "n/a", f"no transformation for {fact.kind}")


def _compare(trace: Trace, edited: Trace, observer: int,
             detail: str) -> Verdict:
    if projection_bytes(trace, observer) == projection_bytes(edited, observer):
        return Verdict(ORACLE, "pass", detail)
    return Verdict(ORACLE, "fail",
                   f"{detail}: observer {observer} projections differ")


def _fresh_value(scripts: dict) -> int:
    used = {op.arg for ops in scripts.values() for op in ops
            if op.arg is not None}
    return max(used, default=0) + 1


# ---------------------------------------------------------------------------
# Written-value substitution (plain register)


def _substitute_write(trace, ana, observer, fact) -> Verdict:
    v = fact.arg
    sh = ana.sh
    enc = sh.encode_value(v)
    hist = sh.history_enc(enc)
    layout = sh.layout
    scripts = _scripts_of(trace.meta)
    twins = sum(1 for ops in scripts.values() for op in ops
                if op.name == "write" and op.arg == v)
    if twins > 1 or v == trace.meta["v0"]:
        # The same encoding can reach the observer from another write (or
        # from the initial value), so word matching is ambiguous.
        return Verdict(ORACLE, "n/a", f"{v!r} is written more than once")

    def changed_word(e, word, _built):
        if e.cell == sh.R:
            return layout.unpack(word)[1] == enc
        if e.cell.startswith(sh.v_prefix):
            return word == hist
        return False

    def changed_val(value):
        return _val_contains(value, lambda u: u == v)

    hit = _exposed(trace, observer, changed_word, changed_val)
    if hit is not None:
        return Verdict(ORACLE, "n/a",
                       f"observer saw {v!r} at its {hit.kind} of {hit.cell}")
    sub = _fresh_value(scripts)
    pid, idx = fact.opid
    old = scripts[pid][idx]
    scripts[pid][idx] = OpSpec(old.name, sub, old.force_nonce)
    try:
        edited = _rerun(trace, scripts)
    except ScheduleError as exc:
        return Verdict(ORACLE, "fail", f"schedule diverged: {exc}")
    return _compare(trace, edited, observer,
                    f"write {fact.opid} input {v!r} replaced with {sub!r}")


# ---------------------------------------------------------------------------
# Tracked-read erasure (pad-bit flips plus deletion)


def _erase_read(trace, ana, observer, fact) -> Verdict:
    sh = ana.sh
    layout = sh.layout
    pid, idx = fact.opid
    j = fact.j
    scripts = _scripts_of(trace.meta)
    if any(op.name not in ("read", "scan") for op in scripts[pid][idx:]):
        return Verdict(ORACLE, "n/a",
                       "erasure would drop non-read operations")
    # Erasing truncates the reader's program at the target, so every one of
    # its reads from the target on is removed; each removed tracked read
    # needs its pad bit flipped and its own preconditions met.
    xor_step: dict[int, int] = {}  # seq -> step of the erased fetch&xor
    for e in trace.events:
        if (e.pid != pid or e.kind not in (XOR, CAS)
                or int(e.op.rsplit(".", 1)[1]) < idx):
            continue
        if e.kind == XOR and e.cell == sh.R:
            xor_step[layout.unpack(e.fetched)[0]] = e.step
        elif e.cell == sh.SN and e.fetched == e.arg[0]:
            # The read advanced SN itself; deleting it would leave SN
            # behind and the remaining schedule would diverge.
            return Verdict(ORACLE, "n/a",
                           "an erased read performed the sequence catch-up")
    if not xor_step:
        return Verdict(ORACLE, "n/a", "the erased reads announced nothing")
    bit = 1 << j
    seqs = set(xor_step)
    # A writer install that failed exactly by the erased bit would succeed
    # in the edited run and the schedules would diverge.
    for e in trace.events:
        if (e.kind == CAS and e.cell == sh.R and e.fetched != e.arg[0]
                and e.fetched ^ e.arg[0] == bit
                and layout.unpack(e.arg[0])[0] in seqs):
            return Verdict(ORACLE, "n/a",
                           "a failed install straddled an erased read")

    def changed_word(e, word, built):
        # Control words at an erased sequence number carry the flipped pad
        # until the erased fetch&xor lands; words the observer built from
        # the pad itself (install arguments) carry it at any step; recorded
        # reader-set words carry the erased bit once a writer collects it.
        if e.cell == sh.R:
            seq = layout.unpack(word)[0]
            return seq in seqs and (built or e.step < xor_step[seq])
        if e.cell.startswith(sh.b_prefix):
            s = int(e.cell.split("[")[1].rstrip("]"))
            return s in seqs and bool(word & bit)
        return False

    def changed_val(value):
        # Audit responses listing the erased reader distinguish the runs
        # legitimately: that is the auditing guarantee doing its job.
        return (isinstance(value, frozenset)
                and any(isinstance(p, tuple) and p and p[0] == j
                        for p in value))

    hit = _exposed(trace, observer, changed_word, changed_val)
    if hit is not None:
        return Verdict(ORACLE, "n/a",
                       f"observer saw the announcement at its "
                       f"{hit.kind} of {hit.cell}")
    scripts[pid] = scripts[pid][:idx]
    cipher = PadCipher(PadKey.from_seed(trace.seed), trace.m)
    for s in sorted(seqs):
        cipher = cipher.flipped(s, j)
    try:
        edited = _rerun(trace, scripts, cipher=cipher, lenient=True)
    except ScheduleError as exc:
        return Verdict(ORACLE, "fail", f"schedule diverged: {exc}")
    return _compare(trace, edited, observer,
                    f"reads of process {pid} from {fact.opid} erased, "
                    f"pad bit {j} flipped at seqs {sorted(seqs)}")


# ---------------------------------------------------------------------------
# Max-register write renumbering (nonce substitution)


def _renumber_write_max(trace, ana, observer, fact) -> Verdict:
    w = fact.arg
    sh = ana.sh
    layout = sh.layout
    venc = fact.venc
    hist = sh.history_enc(venc)
    scripts = _scripts_of(trace.meta)
    twins = sum(1 for ops in scripts.values() for op in ops
                if op.name == "write_max" and op.arg == w)
    if twins > 1:
        # Another pair with the same payload could land between the old
        # and the substituted encoding and flip a comparison.
        return Verdict(ORACLE, "n/a", f"{w!r} written more than once")

    def changed_word(e, word, _built):
        if e.cell == sh.R:
            return layout.unpack(word)[1] == venc
        if e.cell == sh.M:
            return word == venc
        if e.cell.startswith(sh.v_prefix):
            return word == hist
        return False

    def changed_val(value):
        return _val_contains(value, lambda u: u == w)

    hit = _exposed(trace, observer, changed_word, changed_val)
    if hit is not None:
        return Verdict(ORACLE, "n/a",
                       f"observer saw {w!r} at its {hit.kind} of {hit.cell}")
    v0 = trace.meta["v0"]
    smaller = [op.arg for ops in scripts.values() for op in ops
               if op.name == "write_max" and op.arg < w] + [v0]
    u = max(smaller)
    # A nonce above every drawn one keeps (u, n') between (u, *) and (w, *),
    # so every comparison in the edited run resolves the same way.
    n_hi = 1 + sum(len(ops) for ops in scripts.values()) + max(
        (op.force_nonce or 0 for ops in scripts.values() for op in ops),
        default=0)
    # Pin every other write's nonce to the one it actually drew; otherwise
    # the substituted nonce would shift the target process's later draws.
    for f in ana.facts():
        if f.kind != "write_max" or f.venc is None:
            continue
        p, i = f.opid
        old = scripts[p][i]
        scripts[p][i] = OpSpec(old.name, old.arg, ana.sh.split(f.venc)[1])
    pid, idx = fact.opid
    old = scripts[pid][idx]
    scripts[pid][idx] = OpSpec(old.name, u, n_hi)
    try:
        edited = _rerun(trace, scripts)
    except ScheduleError as exc:
        return Verdict(ORACLE, "fail", f"schedule diverged: {exc}")
    return _compare(trace, edited, observer,
                    f"write_max {fact.opid} ({w!r}) renumbered onto {u!r}")


# ---------------------------------------------------------------------------
# Snapshot component-value substitution


def _swap_component(trace, ana, observer, fact) -> Verdict:
    x, comp = fact.arg, fact.comp
    sh = ana.sh
    layout = sh.layout
    scripts = _scripts_of(trace.meta)
    twins = sum(1 for ops in scripts.values() for op in ops
                if op.name == "update" and op.arg == x)
    if twins > 1:
        return Verdict(ORACLE, "n/a", f"{x!r} is updated more than once")
    from .snapshot import COMP_BITS
    comp_mask = (1 << COMP_BITS) - 1
    comp_enc = x + 1

    def view_has(payload) -> bool:
        return (payload >> (comp * COMP_BITS)) & comp_mask == comp_enc

    def changed_word(e, word, _built):
        if e.cell == sh.s_cell(comp):
            return word & comp_mask == comp_enc
        if e.cell == sh.R:
            parts = sh.split(layout.unpack(word)[1])
            return parts is not None and view_has(parts[0])
        if e.cell == sh.M:
            parts = sh.split(word)
            return parts is not None and view_has(parts[0])
        if e.cell.startswith(sh.v_prefix):
            return word != 0 and view_has(word - 1)
        return False

    def changed_val(value):
        def hit(u):
            return isinstance(u, tuple) and comp < len(u) and u[comp] == x
        if hit(value):
            return True
        return _val_contains(value, hit)

    hit = _exposed(trace, observer, changed_word, changed_val)
    if hit is not None:
        return Verdict(ORACLE, "n/a",
                       f"observer saw component {comp} = {x!r} at its "
                       f"{hit.kind} of {hit.cell}")
    sub = _fresh_value(scripts)
    pid, idx = fact.opid
    old = scripts[pid][idx]
    scripts[pid][idx] = OpSpec(old.name, sub, old.force_nonce)
    try:
        edited = _rerun(trace, scripts)
    except ScheduleError as exc:
        return Verdict(ORACLE, "fail", f"schedule diverged: {exc}")
    return _compare(trace, edited, observer,
                    f"update {fact.opid} component value {x!r} "
                    f"replaced with {sub!r}")


def applicable_targets(trace: Trace):
    """Yield (observer, target opid) pairs worth trying on this trace:
    every completed operation against every other process."""
    ana = analyze_trace(trace)
    pids = sorted({p for (p, _r, _i) in trace.meta["roles"]})
    for f in ana.done:
        for obs in pids:
            if obs != f.pid:
                yield obs, f.opid
