"""Executable oracles over traces.

The central piece is :class:`Analyzer`, an incremental observer fed one
event at a time.  It re-derives everything independently of the object
machines: it replays memory contents from the recorded fetched words,
classifies operations (silent/direct reads, visible/silent writes, the
max-register variants), tracks which reads are effective, records the
linearization-relevant step order, and checks the step-count and
phase-structure invariants as the events stream by.

On top of the analyzer state sit the oracle entry points:

- ``check_linearizable``: exact search for a witness linearization against
  the sequential specification (audits must return exactly the pairs of
  reads linearized before them);
- ``construct_linearization``: the explicit construction — operations with
  a linearization step ordered by that step; remaining silent reads placed
  immediately before the visible write with the next sequence number;
  silent writes after those reads; max-register writes placed at the first
  install of their value, snapshot and adapter updates at the first
  install that dominates their version;
- ``classify_operations``, ``detect_effective``, ``verify_audit``,
  ``replay-oriented`` helpers.

The analyzer supports snapshot/restore so the interleaving explorer can
reuse one instance along a depth-first search.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .register import BOT
from .substrate import (CAS, INVOKE, READ, RESPOND, WRITE, XOR, Event,
                        SimMemory, Trace)

LIN_BUDGET = 10**7

_KINDS = {"READ": "read", "WRITE": "write", "WRITEMAX": "write_max",
          "UPDATE": "update", "SCAN": "scan", "AUDIT": "audit"}

_READ_KINDS = ("read", "scan")
_WRITE_KINDS = ("write", "write_max", "update")


@dataclass(frozen=True)
class Verdict:
    oracle: str
    status: str  # pass | fail | inconclusive | n/a
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "pass"

    def line(self) -> str:
        return f"verdict {self.oracle} {self.status} {self.detail or '-'}"


@dataclass(frozen=True)
class OpFact:
    """Everything the oracles need to know about one operation."""

    opid: tuple  # (pid, index in the process's program)
    kind: str
    pid: int
    j: int | None  # tracking-bit index for reading processes
    comp: int | None  # component / writer index
    arg: Any
    result: Any  # actual response, or the predicted one for pending ops
    status: str  # done | pending
    cls: str | None  # silent-read | direct-read | visible-write |
    #                  silent-write | maxw-visible | maxw-silent | audit
    sn: int | None
    preceding: frozenset  # opids completed before this op was invoked
    snread_idx: int | None
    venc: int | None  # nonced control value for max-register-family writes
    vn: int | None  # published version (snapshot / adapter updates)


class SpecContext:
    """Sequential specification: initial state plus transition function.

    State is (object value state, audit pairs).  Audits return exactly the
    pairs of reads linearized before them.
    """

    def __init__(self, kind: str, v0=0, n: int = 1, typespec=None) -> None:
        self.kind = kind
        self.v0 = v0
        self.n = n
        self.typespec = typespec

    def init_value(self):
        if self.kind == "register" or self.kind == "maxreg":
            return self.v0
        if self.kind == "snapshot":
            return (BOT,) * self.n
        return self.typespec.q0

    def apply(self, value, pairs, fact: OpFact):
        """Return (new value state, new pairs, expected result)."""
        kind = fact.kind
        if kind == "write":
            return fact.arg, pairs, None
        if kind == "write_max":
            return max(value, fact.arg), pairs, None
        if kind == "update":
            if self.kind == "snapshot":
                view = list(value)
                view[fact.comp] = fact.arg
                return tuple(view), pairs, None
            return self.typespec.g(fact.arg, value), pairs, None
        if kind in _READ_KINDS:
            if self.kind in ("counter", "clock"):
                out = self.typespec.f(value)
            else:
                out = value
            return value, pairs | {(fact.j, out)}, out
        if kind == "audit":
            return value, pairs, pairs
        raise ValueError(f"unknown operation kind {kind!r}")


def spec_for_trace_meta(meta: dict) -> SpecContext:
    from .versioned import versioned_clock, versioned_counter
    kind = meta["object"]
    n = meta.get("components") or 1 + max(
        (idx for (_p, role, idx) in meta["roles"] if role == "writer"),
        default=0)
    ts = None
    if kind == "counter":
        ts = versioned_counter()
    elif kind == "clock":
        ts = versioned_clock()
    return SpecContext(kind, meta.get("v0", 0), n, ts)


class ViolationError(Exception):
    pass


class Analyzer:
    """Replays a stream of events, deriving classification, effectiveness,
    audit verdicts, and invariant checks as it goes."""

    def __init__(self, kind: str, shared, meta: dict, m: int,
                 init, regions) -> None:
        self.kind = kind
        self.sh = shared
        self.m = m
        self.meta = meta
        self.jmap = {p: idx for (p, role, idx) in meta["roles"]
                     if role == "reader"}
        self.wmap = {p: idx for (p, role, idx) in meta["roles"]
                     if role == "writer"}
        self.forced = {}
        for pid, ops in meta.get("scripts", ()):
            for i, (_name, _arg, force) in enumerate(ops):
                if force is not None:
                    self.forced[(pid, i)] = force
        self.mem = SimMemory()
        for cell, ck, word in init:
            self.mem.new_cell(cell, word, ck)
        for prefix, ck, d in regions:
            self.mem.region(prefix, ck, d)
        self.init_val_enc = shared.layout.unpack(self.mem.read(shared.R))[1]
        # mutable analysis state (snapshot/restore below)
        self.pending: dict[int, dict] = {}
        self.done: tuple = ()
        self.done_ids: frozenset = frozenset()
        self.lin: tuple = ()
        self.eff: frozenset = frozenset()  # (j, value)
        self.effops: frozenset = frozenset()  # (opid, value)
        self.prevsn: dict[int, int | None] = {}
        self.prevval: dict[int, Any] = {}
        self.hnonce: dict[int, int] = {}
        self.opidx: dict[int, int] = {}
        self.snread_counter = 0
        self.last_audit: dict[int, frozenset] = {}
        self.max_write_iters = 0
        # not snapshotted: shared across the whole exploration
        self.violations: list[tuple[str, str]] = []

    # -- snapshot / restore -------------------------------------------------

    def snapshot(self) -> tuple:
        return (
            self.mem.snapshot(),
            {p: dict(d) for p, d in self.pending.items()},
            self.done, self.done_ids, self.lin, self.eff, self.effops,
            dict(self.prevsn), dict(self.prevval), dict(self.hnonce),
            dict(self.opidx), self.snread_counter, dict(self.last_audit),
        )

    def restore(self, snap: tuple) -> None:
        (mem, pending, self.done, self.done_ids, self.lin, self.eff,
         self.effops, prevsn, prevval, hnonce, opidx, self.snread_counter,
         last_audit) = snap
        self.mem.restore(mem)
        self.pending = {p: dict(d) for p, d in pending.items()}
        self.prevsn = dict(prevsn)
        self.prevval = dict(prevval)
        self.hnonce = dict(hnonce)
        self.opidx = dict(opidx)
        self.last_audit = dict(last_audit)

    def key(self) -> tuple:
        pend = tuple(sorted(
            (p, tuple(sorted((k, v) for k, v in d.items())))
            for p, d in self.pending.items()))
        return (self.done, pend, self.lin)

    def leaf_key(self) -> tuple:
        return self.key()

    # -- helpers ------------------------------------------------------------

    def _viol(self, oracle: str, detail: str) -> None:
        self.violations.append((oracle, detail))

    def project(self, value):
        """Map a control-word-level value to the caller-facing result."""
        if value is BOT:
            return value
        if self.kind in ("snapshot", "counter", "clock"):
            return value[1]
        return value

    def _control(self) -> tuple[int, int, int]:
        return self.sh.layout.unpack(self.mem.read(self.sh.R))

    def facts(self) -> tuple:
        out = list(self.done)
        for d in self.pending.values():
            out.append(self._fact(d, status="pending"))
        return tuple(out)

    def _fact(self, d: dict, status: str = "done", result=None) -> OpFact:
        return OpFact(
            opid=d["opid"], kind=d["kind"], pid=d["pid"], j=d.get("j"),
            comp=d.get("comp"), arg=d.get("arg"),
            result=result if status == "done" else d.get("predicted"),
            status=status, cls=d.get("cls"), sn=d.get("sn"),
            preceding=d["preceding"], snread_idx=d.get("snread_idx"),
            venc=d.get("venc"), vn=d.get("vn"),
        )

    # -- event handling -----------------------------------------------------

    def feed(self, ev: Event) -> None:
        if ev.kind == INVOKE:
            self._on_invoke(ev)
            return
        if ev.kind == RESPOND:
            self._on_respond(ev)
            return
        d = self.pending.get(ev.pid)
        if d is None:
            self._viol("trace", f"primitive by {ev.pid} outside any operation")
            return
        d["steps"] = d.get("steps", 0) + 1
        self._phase_check_pre(ev)
        self._dispatch(ev, d)
        self._apply(ev)
        self._phase_check_post(ev)

    def _on_invoke(self, ev: Event) -> None:
        name, _, idx = ev.op.partition(".")
        kind = _KINDS[name]
        idx = int(idx)
        opid = (ev.pid, idx)
        d = {
            "opid": opid, "kind": kind, "pid": ev.pid, "arg": ev.arg,
            "preceding": self.done_ids, "steps": 0,
        }
        if kind in _READ_KINDS:
            d["j"] = self.jmap[ev.pid]
        if kind in _WRITE_KINDS:
            d["comp"] = self.wmap[ev.pid]
        if kind == "write_max":
            n = self.forced.get(opid)
            if n is None:
                n = self.hnonce.get(ev.pid, 0) + 1
            self.hnonce[ev.pid] = max(self.hnonce.get(ev.pid, 0), n)
            d["venc"] = self.sh.enc_nonced(ev.arg, n, self.wmap[ev.pid])
        if kind == "update":
            d["phase"] = "swrite" if self.kind == "snapshot" else "t0"
        self.pending[ev.pid] = d

    def _on_respond(self, ev: Event) -> None:
        d = self.pending.pop(ev.pid)
        kind = d["kind"]
        result = ev.arg
        self._check_bounds(d)
        if kind in _READ_KINDS:
            predicted = d.get("predicted")
            if predicted is not None or d.get("cls") == "silent-read":
                if result != predicted:
                    self._viol("read-return",
                               f"{d['opid']} returned {result!r}, "
                               f"derived {predicted!r}")
            if d.get("cls") == "direct-read":
                self.prevsn[ev.pid] = d["sn"]
            self.prevval[ev.pid] = result
        elif kind == "audit":
            expected = d.get("expected", frozenset())
            if result != expected:
                self._viol("audit-iff-effective",
                           f"{d['opid']} reported {sorted(map(str, result))} "
                           f"expected {sorted(map(str, expected))}")
            prev = self.last_audit.get(ev.pid, frozenset())
            if not prev <= result:
                self._viol("audit-monotone",
                           f"{d['opid']} lost pairs {prev - result}")
            self.last_audit[ev.pid] = result
            d["cls"] = "audit"
        elif kind in _WRITE_KINDS and d.get("cls") is None:
            self._viol("classification",
                       f"{d['opid']} completed without a class")
        fact = self._fact(d, status="done", result=result)
        self.done = self.done + (fact,)
        self.done_ids = self.done_ids | {d["opid"]}

    def _check_bounds(self, d: dict) -> None:
        kind, steps = d["kind"], d["steps"]
        if kind in _READ_KINDS:
            if steps > 4:
                self._viol("read-steps", f"{d['opid']} took {steps} steps")
        elif kind == "audit":
            delta = d["sn"] - d["lsa"]
            if steps > 2 + self.m * delta + 2:
                self._viol("audit-steps",
                           f"{d['opid']} took {steps} steps for window {delta}")
            if steps != 2 + 2 * delta:
                self._viol("audit-steps",
                           f"{d['opid']} took {steps}, expected {2 + 2 * delta}")
        elif kind == "write":
            if d.get("rcas", 0) > self.m + 1:
                self._viol("write-iterations",
                           f"{d['opid']} applied {d['rcas']} compare&swaps to R")
            self.max_write_iters = max(self.max_write_iters, d.get("iters", 0))
        else:
            self.max_write_iters = max(self.max_write_iters, d.get("iters", 0))

    def _dispatch(self, ev: Event, d: dict) -> None:
        sh = self.sh
        cell = ev.cell
        kind = d["kind"]
        if cell == sh.SN and ev.kind == READ:
            self.snread_counter += 1
            d.setdefault("snread_idx", self.snread_counter)
            if kind in _READ_KINDS:
                x = ev.fetched
                if x == self.prevsn.get(ev.pid):
                    d["cls"] = "silent-read"
                    d["sn"] = x
                    d["predicted"] = self.prevval.get(ev.pid)
                    j = d["j"]
                    self.eff = self.eff | {(j, d["predicted"])}
                    self.effops = self.effops | {(d["opid"], d["predicted"])}
                    if self._control()[0] == x:
                        d["r1"] = True
                        self.lin = self.lin + (("op", d["opid"]),)
                    else:
                        d["r1"] = False
                        self.lin = self.lin + (("r2", d["opid"], x),)
            else:
                d["sn"] = ev.fetched + 1
        elif cell == sh.R and ev.kind == READ:
            lseq, lval_enc, _bits = sh.layout.unpack(ev.fetched)
            if kind == "audit":
                if "sn" not in d:
                    rsn, rval_enc, rbits = sh.layout.unpack(ev.fetched)
                    d["sn"] = rsn
                    d["lsa"] = self._lsa(ev.pid)
                    d["expected"] = self.eff
                    self.lin = self.lin + (("op", d["opid"]),)
            else:
                d["iters"] = d.get("iters", 0) + 1
                if kind == "write":
                    if lseq >= d["sn"] and d.get("cls") is None:
                        d["cls"] = "silent-write"
                        self.lin = self.lin + (("r3", d["opid"], d["sn"]),)
                elif "venc" in d:  # max-register-family install loop
                    if lval_enc >= d["venc"] and d.get("cls") is None:
                        d["cls"] = "maxw-silent"
                        d["sn"] = lseq
                        self.lin = self.lin + (("op", d["opid"]),)
        elif cell == sh.R and ev.kind == XOR:
            seq, val_enc, _bits = sh.layout.unpack(ev.fetched)
            d["cls"] = "direct-read"
            d["sn"] = seq
            value = self.project(sh.result_value(val_enc))
            d["predicted"] = value
            j = d["j"]
            self.eff = self.eff | {(j, value)}
            self.effops = self.effops | {(d["opid"], value)}
            self.lin = self.lin + (("op", d["opid"]),)
        elif cell == sh.R and ev.kind == CAS:
            exp, new = ev.arg
            d["rcas"] = d.get("rcas", 0) + 1
            if ev.fetched == exp:
                seq, val_enc, _bits = sh.layout.unpack(new)
                oldseq, old_enc, _ = sh.layout.unpack(ev.fetched)
                if self.kind != "register" and not val_enc > old_enc:
                    self._viol("maxreg-monotone",
                               f"install at seq {seq} does not raise the value")
                self.lin = self.lin + (("install", d["opid"], seq, val_enc),)
                if kind == "write":
                    d["cls"] = "visible-write"
                    d["sn"] = seq
                else:
                    self._mark_visible(val_enc, seq)
                    self._check_install_max(val_enc, seq)
                    if d.get("cls") is None and d.get("venc") != val_enc:
                        # Exited by installing a larger value read from M:
                        # the op is silent, placed here, right after the
                        # owner of the installed value.
                        d["cls"] = "maxw-silent"
                        d["sn"] = seq
                        self.lin = self.lin + (("op", d["opid"]),)
        elif getattr(sh, "M", None) == cell and ev.kind == CAS:
            exp, new = ev.arg
            if ev.fetched == exp and not new > exp:
                self._viol("maxreg-monotone", "plain max register lowered")
        elif self.kind == "snapshot" and cell.startswith(sh.prefix + "S["):
            self._snapshot_phase(ev, d)
        elif getattr(sh, "T", None) == cell:
            self._adapter_phase(ev, d)

    def _lsa(self, pid: int) -> int:
        for f in reversed(self.done):
            if f.pid == pid and f.kind == "audit":
                return f.sn
        return 0

    def _mark_visible(self, val_enc: int, seq: int) -> None:
        for d in self.pending.values():
            if d.get("venc") == val_enc:
                if d.get("cls") is None:
                    d["cls"] = "maxw-visible"
                    d["sn"] = seq
                return
        for f in self.done:
            if f.venc == val_enc:
                if f.cls == "maxw-visible":
                    return
                self._viol("classification",
                           f"value of completed {f.opid} installed late")
                return
        self._viol("classification",
                   f"install of value {val_enc:#x} owned by no operation")

    def _check_install_max(self, val_enc: int, seq: int) -> None:
        """Every install must carry exactly the largest value whose write
        has become visible (counting the initial value).  Together with the
        marker-step read rule this is the sequential max-register spec."""
        best = self.init_val_enc
        for d in self.pending.values():
            if d.get("cls") == "maxw-visible" and d.get("venc", 0) > best:
                best = d["venc"]
        for f in self.done:
            if f.cls == "maxw-visible" and f.venc is not None and f.venc > best:
                best = f.venc
        if val_enc != best:
            self._viol("install-max",
                       f"install at seq {seq} carries {val_enc:#x}, largest "
                       f"visible value is {best:#x}")

    def _snapshot_phase(self, ev: Event, d: dict) -> None:
        sh = self.sh
        if d.get("phase") == "swrite" and ev.kind == WRITE:
            d["phase"] = "collect"
            d["collect"] = ()
            d["prevpass"] = None
            return
        if d.get("phase") == "collect" and ev.kind == READ:
            d["collect"] = d["collect"] + (ev.fetched,)
            if len(d["collect"]) == sh.n:
                if d["collect"] == d["prevpass"]:
                    pairs = [sh.unpack_comp(w) for w in d["collect"]]
                    vn = sum(sn for sn, _ in pairs)
                    view = tuple(v for _, v in pairs)
                    d["vn"] = vn
                    d["view"] = view
                    d["venc"] = sh.enc_nonced(sh.pack_payload(vn, view), 0,
                                              d["comp"])
                    d["phase"] = "maxw"
                else:
                    d["prevpass"] = d["collect"]
                    d["collect"] = ()

    def _adapter_phase(self, ev: Event, d: dict) -> None:
        sh = self.sh
        phase = d.get("phase")
        if phase == "t0" and ev.kind == READ:
            d["phase"] = "tcas"
        elif phase == "tcas" and ev.kind == CAS:
            exp, _new = ev.arg
            if ev.fetched == exp:
                d["phase"] = "t1"
        elif phase == "t1" and ev.kind == READ:
            vn, q = sh.unpack_state(ev.fetched)
            d["vn"] = vn
            d["venc"] = sh.enc_nonced(sh.pack_payload(vn, sh.spec.f(q)), 0,
                                      d["comp"])
            d["phase"] = "maxw"

    # -- memory replay and phase invariants ---------------------------------

    def _apply(self, ev: Event) -> None:
        if ev.kind == READ:
            actual = self.mem.read(ev.cell)
            if actual != ev.fetched:
                self._viol("trace", f"read of {ev.cell} fetched "
                           f"{ev.fetched:#x}, replay says {actual:#x}")
                self.mem.write(ev.cell, ev.fetched)
        elif ev.kind == WRITE:
            self.mem.write(ev.cell, ev.arg)
        elif ev.kind == CAS:
            exp, new = ev.arg
            got = self.mem.cas(ev.cell, exp, new)
            if got != ev.fetched:
                self._viol("trace", f"compare&swap on {ev.cell} saw "
                           f"{ev.fetched:#x}, replay says {got:#x}")
                self.mem.write(ev.cell, new if ev.fetched == exp else ev.fetched)
        elif ev.kind == XOR:
            got = self.mem.fetch_xor(ev.cell, ev.arg)
            if got != ev.fetched:
                self._viol("trace", f"fetch&xor on {ev.cell} saw "
                           f"{ev.fetched:#x}, replay says {got:#x}")

    def _phase_check_pre(self, ev: Event) -> None:
        if ev.cell in (self.sh.R, self.sh.SN):
            self._phase_pre = (self._control()[0], self.mem.read(self.sh.SN))

    def _phase_check_post(self, ev: Event) -> None:
        if ev.cell not in (self.sh.R, self.sh.SN):
            return
        rseq0, sn0 = self._phase_pre
        rseq1, sn1 = self._control()[0], self.mem.read(self.sh.SN)
        ok = True
        if (rseq1, sn1) != (rseq0, sn0):
            if (rseq1, sn1) == (rseq0 + 1, sn0):
                ok = rseq0 == sn0  # install only during E_x
            elif (rseq1, sn1) == (rseq0, sn0 + 1):
                ok = rseq0 == sn0 + 1  # SN catch-up only during D_x
            else:
                ok = False
        if not (sn1 <= rseq1 <= sn1 + 1):
            ok = False
        if not ok:
            self._viol("phase", f"(R.seq, SN) moved {rseq0, sn0} -> "
                       f"{rseq1, sn1} at step {ev.step}")


def analyzer_for_system(system) -> Analyzer:
    mem = system.memory
    init = [(n, k, w) for n, (k, w) in sorted(mem.singles.items())]
    regions = [(p, k, d) for p, (k, d) in sorted(mem.regions.items())]
    return Analyzer(system.meta["object"], system.shared, system.meta,
                    system.m, init=init, regions=regions)


def analyzer_for_trace(trace: Trace) -> Analyzer:
    from .systems import system_from_meta
    system = system_from_meta(trace.meta, trace.seed, m=trace.m)
    ana = Analyzer(trace.meta["object"], system.shared, trace.meta, trace.m,
                   init=trace.init, regions=trace.regions)
    return ana


def analyze_trace(trace: Trace, upto: int | None = None) -> Analyzer:
    ana = analyzer_for_trace(trace)
    for ev in trace.events:
        if upto is not None and ev.step >= upto:
            break
        ana.feed(ev)
    return ana


# ---------------------------------------------------------------------------
# Oracle entry points


def classify_operations(trace: Trace) -> dict:
    """Per-operation tag and sequence number, per the step-based rules."""
    ana = analyze_trace(trace)
    return {f.opid: (f.cls if f.cls is not None else "unclassified", f.sn,
                     f.status)
            for f in ana.facts()}


def detect_effective(trace: Trace, cut: int | None = None) -> frozenset:
    """(operation id, value) pairs effective after the prefix ending at
    ``cut`` (entire trace when omitted)."""
    ana = analyze_trace(trace, upto=cut)
    return ana.effops


def verify_audit(trace: Trace) -> Verdict:
    """Every completed audit reports exactly the effective reads preceding
    its linearization point."""
    ana = analyze_trace(trace)
    bad = [d for o, d in ana.violations if o == "audit-iff-effective"]
    if bad:
        return Verdict("verify_audit", "fail", bad[0])
    return Verdict("verify_audit", "pass")


def trace_invariant_violations(trace: Trace) -> list:
    ana = analyze_trace(trace)
    return ana.violations


# ---------------------------------------------------------------------------
# Linearizability checking


def check_linearizable(facts, spec: SpecContext,
                       budget: int = LIN_BUDGET) -> Verdict:
    """Exact search for a linearization of ``facts`` (OpFact sequence).

    Pending operations may be dropped or included with the response the
    specification dictates; completed operations must all appear and their
    recorded responses must match.
    """
    ops = [f for f in facts]
    ids = {f.opid: i for i, f in enumerate(ops)}
    preds = []
    for f in ops:
        preds.append(frozenset(ids[o] for o in f.preceding if o in ids))
    n = len(ops)
    init = (spec.init_value(), frozenset())
    seen = set()
    explored = 0
    order: list[int] = []

    def dfs(done: frozenset, value, pairs) -> bool:
        nonlocal explored
        if len(done) == n:
            return True
        key = (done, value, pairs)
        if key in seen:
            return False
        explored += 1
        if explored > budget:
            raise ViolationError("budget")
        seen.add(key)
        for i, f in enumerate(ops):
            if i in done or not preds[i] <= done:
                continue
            if f.status == "pending":
                # Branch 1: the pending op never takes effect.
                order.append(-i - 1)
                if dfs(done | {i}, value, pairs):
                    return True
                order.pop()
            value2, pairs2, res = spec.apply(value, pairs, f)
            if f.status == "done" and res is not None and res != f.result:
                continue
            if (f.status == "pending" and f.result is not None
                    and res is not None and res != f.result):
                continue
            order.append(i)
            if dfs(done | {i}, value2, pairs2):
                return True
            order.pop()
        return False

    try:
        found = dfs(frozenset(), init[0], init[1])
    except ViolationError:
        return Verdict("check_linearizable", "inconclusive",
                       f"budget {budget} states exceeded")
    if found:
        witness = ",".join(
            f"{ops[i].opid[0]}:{ops[i].opid[1]}" for i in order if i >= 0)
        return Verdict("check_linearizable", "pass", witness)
    return Verdict("check_linearizable", "fail",
                   f"no legal ordering of {n} operations")


# ---------------------------------------------------------------------------
# Explicit linearization construction


def construct_linearization(facts, lin, kind: str, spec: SpecContext):
    """Build the explicit linearization from the recorded step order.

    Returns (ordered list of OpFact, Verdict).  The verdict checks that
    the construction places every completed operation, respects real-time
    order, and satisfies the sequential specification.
    """
    byid = {f.opid: f for f in facts}
    installs_by_seq: dict[int, int] = {}
    for e, entry in enumerate(lin):
        if entry[0] == "install":
            installs_by_seq.setdefault(entry[2], e)

    keyed: list[tuple[tuple, OpFact]] = []
    placed = set()
    r2_order: dict[tuple, int] = {}
    for e, entry in enumerate(lin):
        if entry[0] == "r2":
            r2_order[entry[1]] = e

    def place(sortkey, opid):
        if opid in placed or opid not in byid:
            return
        f = byid[opid]
        if f.status == "pending" and f.kind == "audit":
            return  # pending audits are removed in the completion
        placed.add(opid)
        keyed.append((sortkey, f))

    unplaced_updates = sorted(
        (f for f in facts if f.kind == "update" and f.vn is not None),
        key=lambda f: f.vn)

    for e, entry in enumerate(lin):
        tag = entry[0]
        if tag == "op":
            opid = entry[1]
            f = byid.get(opid)
            if f is None:
                continue
            if f.cls == "maxw-visible" and f.kind != "update":
                continue  # placed at its first install instead
            if f.kind == "update":
                continue  # updates are placed by the install rule
            place((e, 2, 0), opid)
        elif tag == "r2":
            opid, x = entry[1], entry[2]
            ei = installs_by_seq.get(x + 1)
            if ei is None:
                # No install with sequence x+1 recorded; keep real order.
                place((e, 2, 0), opid)
            else:
                place((ei, 0, e), opid)
        elif tag == "r3":
            opid, x = entry[1], entry[2]
            f = byid.get(opid)
            ei = installs_by_seq.get(x)
            idx = f.snread_idx if f is not None and f.snread_idx else 0
            if ei is None:
                place((e, 2, 0), opid)
            else:
                place((ei, 1, idx), opid)
        elif tag == "install":
            installer, seq, val_enc = entry[1], entry[2], entry[3]
            if installs_by_seq.get(seq) != e:
                continue  # only the first install of a sequence number
            if kind == "register":
                place((e, 2, 0), installer)
                continue
            owner = next((f for f in facts if f.venc == val_enc
                          and f.kind == "write_max"), None)
            if owner is not None:
                place((e, 2, 0), owner.opid)
            if kind in ("snapshot", "counter", "clock"):
                from .maxreg import NONCE_BITS, TIE_BITS
                payload = (val_enc >> (NONCE_BITS + TIE_BITS)) - 1
                vn_i, view_i = _decode_payload(kind, spec, payload)
                k = 1
                still = []
                for f in unplaced_updates:
                    if f.opid in placed:
                        continue
                    ok = f.vn <= vn_i
                    if ok and kind == "snapshot":
                        ok = view_i[f.comp] == f.arg
                    if ok:
                        place((e, 2, k), f.opid)
                        k += 1
                    else:
                        still.append(f)
                unplaced_updates = still

    keyed.sort(key=lambda kv: kv[0])
    order = [f for _k, f in keyed]

    problems = []
    for f in facts:
        if f.opid in placed or f.status == "pending":
            continue
        if f.kind == "update":
            problems.append(f"completed update {f.opid} discarded")
        elif f.cls is None:
            pass  # unclassified completed op would be a classification bug
        else:
            problems.append(f"completed {f.kind} {f.opid} not placed")

    for a in range(len(order)):
        for b in range(a + 1, len(order)):
            if order[b].opid in order[a].preceding:
                problems.append(
                    f"real-time order violated: {order[b].opid} precedes "
                    f"{order[a].opid} but is placed after")

    value, pairs = spec.init_value(), frozenset()
    for f in order:
        value, pairs, res = spec.apply(value, pairs, f)
        if res is not None:
            actual = f.result
            if actual is None and f.status == "pending":
                continue
            if actual != res:
                problems.append(
                    f"{f.kind} {f.opid} returned {actual!r}, "
                    f"the construction implies {res!r}")

    if problems:
        return order, Verdict("construct_linearization", "fail", problems[0])
    return order, Verdict("construct_linearization", "pass",
                          f"{len(order)} operations placed")


def _decode_payload(kind: str, spec: SpecContext, payload: int):
    from .snapshot import COMP_BITS
    from .versioned import OUT_BITS
    if kind == "snapshot":
        view = []
        for i in range(spec.n):
            c = (payload >> (i * COMP_BITS)) & ((1 << COMP_BITS) - 1)
            view.append(BOT if c == 0 else c - 1)
        return payload >> (spec.n * COMP_BITS), tuple(view)
    return payload >> OUT_BITS, None


def construct_from_trace(trace: Trace):
    ana = analyze_trace(trace)
    spec = spec_for_trace_meta(trace.meta)
    return construct_linearization(ana.facts(), ana.lin, ana.kind, spec)


def check_trace_linearizable(trace: Trace, budget: int = LIN_BUDGET) -> Verdict:
    ana = analyze_trace(trace)
    spec = spec_for_trace_meta(trace.meta)
    return check_linearizable(ana.facts(), spec, budget)
