"""Timed stress runs over real threads.

One thread per configured process hammers a register instance backed by
:class:`~auditmem.substrate.NativeMemory` while a monitor thread watches
the control cells.  The run records an invocation/response history and the
checks are the ones that stay sound without a global step order:

- monotonicity of the published sequence number and the control sequence
  number, and the phase relation between them (sampled with a double
  collect so a torn pair of reads cannot raise a false alarm);
- per-auditor audit results are cumulative (each a superset of the last);
- the helping loop of every write finishes within m + 1 passes;
- sliding windows of at most 8 completed operations are linearizable
  against the register semantics, with the state at the window boundary
  treated as unknown-but-plausible.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

from .pads import PadCipher, PadKey
from .register import (AuditOp, AuditorHandle, Layout, NATIVE_LAYOUT,
                       ReadOp, ReaderHandle, RegisterShared, WriteOp)
from .substrate import NativeMemory, apply_primitive

WINDOW = 8
VALUE_SPACE = 50000  # distinct write inputs cycle inside the 16-bit payload


@dataclass
class OpRecord:
    pid: int
    name: str
    arg: int | None
    result: object
    inv: int
    res: int
    iters: int = 0


@dataclass
class StressReport:
    seconds: float
    wall: float = 0.0
    ops: dict = field(default_factory=dict)  # name -> count
    max_write_iters: int = 0
    windows: int = 0
    violations: list = field(default_factory=list)  # (oracle, detail)
    deadlocked: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations and not self.deadlocked


class _Clock:
    """A shared event counter giving invocations and responses a total
    order consistent with real time."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._n = 0

    def tick(self) -> int:
        with self._lock:
            self._n += 1
            return self._n


def _run_machine(mem, machine):
    prim = machine.step(None)
    while prim is not None:
        fetched = apply_primitive(mem, prim)
        prim = machine.step(fetched)
    return machine


def run_stress(*, writers: int = 2, readers: int = 2, auditors: int = 1,
               seconds: float = 10.0, seed: int = 1,
               layout: Layout = NATIVE_LAYOUT) -> StressReport:
    mem = NativeMemory()
    cipher = PadCipher(PadKey.from_seed(seed), layout.m)
    shared = RegisterShared(layout, cipher)
    v0 = 0
    shared.setup(mem, v0)
    if readers > layout.m:
        raise ValueError(f"{readers} readers exceed the m={layout.m} budget")

    clock = _Clock()
    stop = threading.Event()
    report = StressReport(seconds=seconds)
    records: dict[int, list[OpRecord]] = {}
    vlock = threading.Lock()

    def violate(oracle: str, detail: str) -> None:
        with vlock:
            if len(report.violations) < 50:
                report.violations.append((oracle, detail))

    next_value = _Clock()

    def writer(pid: int) -> None:
        out = records[pid] = []
        while not stop.is_set():
            v = next_value.tick() % VALUE_SPACE
            inv = clock.tick()
            machine = _run_machine(mem, WriteOp(shared, v))
            out.append(OpRecord(pid, "write", v, None, inv, clock.tick(),
                                machine.iters))
            # Pacing keeps write inputs unique for the whole run (no
            # wrap-around of the value space) and keeps the number of
            # writes overlapping any 8-operation window small enough for
            # the exact window check.
            time.sleep(0.001)

    def reader(pid: int, j: int) -> None:
        out = records[pid] = []
        handle = ReaderHandle()
        while not stop.is_set():
            inv = clock.tick()
            machine = _run_machine(mem, ReadOp(shared, handle, j))
            out.append(OpRecord(pid, "read", None, machine.result, inv,
                                clock.tick()))

    def auditor(pid: int) -> None:
        out = records[pid] = []
        handle = AuditorHandle()
        prev: frozenset = frozenset()
        while not stop.is_set():
            inv = clock.tick()
            machine = _run_machine(mem, AuditOp(shared, handle))
            out.append(OpRecord(pid, "audit", None, machine.result, inv,
                                clock.tick()))
            if not machine.result >= prev:
                violate("audit_monotone",
                        f"auditor {pid} lost pairs {prev - machine.result}")
            prev = machine.result

    def monitor() -> None:
        last_seq = 0
        last_sn = 0
        while not stop.is_set():
            sn1 = mem.read(shared.SN)
            seq = layout.unpack(mem.read(shared.R))[0]
            sn2 = mem.read(shared.SN)
            if seq < last_seq:
                violate("phase", f"control seq regressed {last_seq}->{seq}")
            if sn1 < last_sn:
                violate("phase", f"published sn regressed {last_sn}->{sn1}")
            # Only a stable double collect pins seq and sn to the same
            # moment; otherwise the pair may be torn and proves nothing.
            if sn1 == sn2 and not sn1 <= seq <= sn1 + 1:
                violate("phase", f"sn={sn1} but control seq={seq}")
            last_seq, last_sn = max(last_seq, seq), max(last_sn, sn1)

    threads = []
    pid = 0
    for _ in range(writers):
        threads.append(threading.Thread(target=writer, args=(pid,),
                                        daemon=True))
        pid += 1
    for j in range(readers):
        threads.append(threading.Thread(target=reader, args=(pid, j),
                                        daemon=True))
        pid += 1
    for _ in range(auditors):
        threads.append(threading.Thread(target=auditor, args=(pid,),
                                        daemon=True))
        pid += 1
    threads.append(threading.Thread(target=monitor, daemon=True))

    t0 = time.monotonic()
    for t in threads:
        t.start()
    time.sleep(seconds)
    stop.set()
    for t in threads:
        t.join(timeout=30.0)
        if t.is_alive():
            report.deadlocked = True
    report.wall = time.monotonic() - t0

    history: list[OpRecord] = sorted(
        (r for out in records.values() for r in out), key=lambda r: r.inv)
    for r in history:
        report.ops[r.name] = report.ops.get(r.name, 0) + 1
        if r.name == "write":
            report.max_write_iters = max(report.max_write_iters, r.iters)
            if r.iters > layout.m + 1:
                violate("write_wait_free",
                        f"write by {r.pid} took {r.iters} loop passes")
    report.windows = _check_windows(history, v0, violate)
    return report


def _check_windows(history: list[OpRecord], v0, violate) -> int:
    """Exact linearizability on sliding windows of completed reads and
    writes.  The value at a window boundary is unknown, so the first read
    before any write may return anything plausibly installed earlier."""
    rw = [r for r in history if r.name in ("read", "write")]
    writes = sorted((r for r in rw if r.name == "write"), key=lambda r: r.res)
    windows = 0
    plausible = {v0}
    done_ptr = 0  # writes with res < window start, folded into plausible
    for start in range(0, len(rw), WINDOW):
        window = rw[start:start + WINDOW]
        if not window:
            break
        lo = min(r.inv for r in window)
        hi = max(r.res for r in window)
        while done_ptr < len(writes) and writes[done_ptr].res < lo:
            plausible.add(writes[done_ptr].arg)
            done_ptr += 1
        # Writes overlapping the window may linearize inside it even though
        # they fall outside the slice; they join the search as optional.
        in_window = {id(r) for r in window}
        overlap = []
        k = done_ptr
        misses = 0
        while k < len(writes) and misses < 4 and len(overlap) <= 12:
            w = writes[k]
            if w.inv > hi:
                # Writes are sorted by response; a short run of later
                # responses can still start inside the window, so only a
                # streak of starts past the end terminates the scan.
                misses += 1
            else:
                misses = 0
                if id(w) not in in_window:
                    overlap.append(w)
            k += 1
        if len(overlap) > 12:
            # A descheduled reader can stretch a window over arbitrarily
            # many writes; the exact search is only run where it is sound
            # and affordable.
            continue
        windows += 1
        if not _window_linearizable(window, overlap, plausible):
            violate("window_linearizable",
                    "no linearization for window starting at op "
                    f"{window[0].inv} "
                    f"({[(r.name, r.arg, r.result) for r in window]})")
    return windows


def _window_linearizable(window, overlap, plausible) -> bool:
    ops = list(window) + list(overlap)
    optional = {id(r) for r in overlap}
    n = len(ops)
    prec = [[ops[a].res < ops[b].inv for b in range(n)] for a in range(n)]
    seen: set = set()
    unknown = object()

    def search(done: frozenset, state) -> bool:
        if len(done) == n:
            return True
        key = (done, state if state is not unknown else unknown)
        if key in seen:
            return False
        seen.add(key)
        for i in range(n):
            if i in done:
                continue
            if any(a not in done and prec[a][i] for a in range(n)):
                continue
            r = ops[i]
            if r.name == "write":
                if search(done | {i}, r.arg):
                    return True
                if id(r) in optional and search(done | {i}, state):
                    return True  # linearized after the window
            else:
                if state is unknown:
                    if r.result in plausible and search(done | {i}, r.result):
                        return True
                elif r.result == state and search(done | {i}, state):
                    return True
        return False

    return search(frozenset(), unknown)
