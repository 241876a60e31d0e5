"""Shared-memory substrate: cells, traces, and the simulated scheduler.

Cells hold unsigned integers (unbounded on the simulated backend) and come
in two kinds: atomic-rmw cells support read, write, compare&swap and
fetch&xor; plain cells support only read and write.

Operations on the implemented objects are written as resumable step
machines: each machine exposes ``step(fetched)`` which returns the next
primitive request (or ``None`` when the operation has completed, with the
return value in ``machine.result``).  The same machines run under the
deterministic simulated scheduler, the interleaving enumerators, and the
native threaded driver.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, NamedTuple

ATOMIC = "atomic"
PLAIN = "plain"

READ = "read"
WRITE = "write"
CAS = "cas"
XOR = "fetch-xor"
INVOKE = "invoke"
RESPOND = "respond"

TRACE_HEADER = "auditable-trace v1"


class CellKindError(Exception):
    """A primitive was applied to a cell of the wrong kind."""


class UnknownCellError(Exception):
    """A primitive named a cell that was never registered."""


class ScheduleError(Exception):
    """A schedule named a process with no pending step."""


class Event(NamedTuple):
    step: int
    pid: int
    kind: str
    op: str
    cell: str | None
    arg: Any
    fetched: Any


# ---------------------------------------------------------------------------
# Memory


class SimMemory:
    """Deterministic single-threaded memory of named cells.

    Cells are registered individually (``new_cell``) or as growable regions
    (``region``) whose members are named ``prefix[index]`` and spring into
    existence with a default word on first write.  Region reads of untouched
    members return the default, matching append-only history arrays that are
    written before anyone reads them.
    """

    def __init__(self) -> None:
        self.words: dict[str, int] = {}
        self.singles: dict[str, tuple[str, int]] = {}
        self.regions: dict[str, tuple[str, int]] = {}

    def new_cell(self, name: str, initial: int, kind: str = ATOMIC) -> str:
        if kind not in (ATOMIC, PLAIN):
            raise ValueError(f"unknown cell kind {kind!r}")
        if name in self.singles:
            raise ValueError(f"cell {name!r} already exists")
        self.singles[name] = (kind, initial)
        self.words[name] = initial
        return name

    def region(self, prefix: str, kind: str = PLAIN, default: int = 0) -> None:
        if kind not in (ATOMIC, PLAIN):
            raise ValueError(f"unknown cell kind {kind!r}")
        self.regions[prefix] = (kind, default)

    def _resolve(self, name: str) -> tuple[str, int]:
        info = self.singles.get(name)
        if info is not None:
            return info
        prefix = name.split("[", 1)[0]
        info = self.regions.get(prefix)
        if info is None:
            raise UnknownCellError(name)
        return info

    def kind_of(self, name: str) -> str:
        return self._resolve(name)[0]

    def read(self, name: str) -> int:
        kind, default = self._resolve(name)
        return self.words.get(name, default)

    def write(self, name: str, w: int) -> None:
        self._resolve(name)
        self.words[name] = w

    def cas(self, name: str, expected: int, new: int) -> int:
        """Attempt the swap and return the pre-step word (success iff it
        equals ``expected``)."""
        kind, default = self._resolve(name)
        if kind != ATOMIC:
            raise CellKindError(f"compare&swap on plain cell {name!r}")
        cur = self.words.get(name, default)
        if cur == expected:
            self.words[name] = new
        return cur

    def fetch_xor(self, name: str, mask: int) -> int:
        kind, default = self._resolve(name)
        if kind != ATOMIC:
            raise CellKindError(f"fetch&xor on plain cell {name!r}")
        cur = self.words.get(name, default)
        self.words[name] = cur ^ mask
        return cur

    def snapshot(self) -> dict[str, int]:
        return dict(self.words)

    def restore(self, snap: dict[str, int]) -> None:
        self.words = dict(snap)

    def state_key(self) -> frozenset:
        return frozenset(self.words.items())

    def initial_contents(self) -> list[tuple[str, str, int]]:
        return [(n, k, init) for n, (k, init) in sorted(self.singles.items())]


class NativeMemory:
    """Thread-safe memory with one lock per cell.

    Same interface as :class:`SimMemory`; every primitive is atomic with
    respect to concurrent callers.
    """

    def __init__(self) -> None:
        self._guard = threading.Lock()
        self._cells: dict[str, list] = {}  # name -> [lock, word]
        self.singles: dict[str, tuple[str, int]] = {}
        self.regions: dict[str, tuple[str, int]] = {}

    def new_cell(self, name: str, initial: int, kind: str = ATOMIC) -> str:
        with self._guard:
            if name in self.singles:
                raise ValueError(f"cell {name!r} already exists")
            self.singles[name] = (kind, initial)
            self._cells[name] = [threading.Lock(), initial]
        return name

    def region(self, prefix: str, kind: str = PLAIN, default: int = 0) -> None:
        with self._guard:
            self.regions[prefix] = (kind, default)

    def _slot(self, name: str) -> list:
        with self._guard:
            slot = self._cells.get(name)
            if slot is None:
                prefix = name.split("[", 1)[0]
                if name in self.singles:
                    pass
                elif prefix in self.regions:
                    slot = self._cells[name] = [threading.Lock(), self.regions[prefix][1]]
                else:
                    raise UnknownCellError(name)
            return slot

    def kind_of(self, name: str) -> str:
        if name in self.singles:
            return self.singles[name][0]
        prefix = name.split("[", 1)[0]
        if prefix in self.regions:
            return self.regions[prefix][0]
        raise UnknownCellError(name)

    def read(self, name: str) -> int:
        slot = self._slot(name)
        with slot[0]:
            return slot[1]

    def write(self, name: str, w: int) -> None:
        slot = self._slot(name)
        with slot[0]:
            slot[1] = w

    def cas(self, name: str, expected: int, new: int) -> int:
        if self.kind_of(name) != ATOMIC:
            raise CellKindError(f"compare&swap on plain cell {name!r}")
        slot = self._slot(name)
        with slot[0]:
            cur = slot[1]
            if cur == expected:
                slot[1] = new
            return cur

    def fetch_xor(self, name: str, mask: int) -> int:
        if self.kind_of(name) != ATOMIC:
            raise CellKindError(f"fetch&xor on plain cell {name!r}")
        slot = self._slot(name)
        with slot[0]:
            cur = slot[1]
            slot[1] = cur ^ mask
            return cur


# ---------------------------------------------------------------------------
# Step machines and processes


class OpMachine:
    """A resumable operation: one primitive request per ``step`` call.

    Subclasses list their resumable local variables in ``_fields`` so the
    scheduler can snapshot and restore in-progress operations.  ``note``
    carries a semantic annotation of the last applied primitive for
    observers; it is transient and not part of the snapshot.
    """

    name = "OP"
    _fields: tuple[str, ...] = ()

    def __init__(self, arg: Any = None) -> None:
        self.arg = arg
        self.result: Any = None
        self.note: tuple | None = None

    def step(self, fetched: Any) -> tuple | None:
        raise NotImplementedError

    def snap(self) -> tuple:
        return tuple(getattr(self, f) for f in self._fields)

    def restore(self, snap: tuple) -> None:
        for f, v in zip(self._fields, snap):
            setattr(self, f, v)


class Handle:
    """Per-process local state that persists across operations."""

    _fields: tuple[str, ...] = ()

    def snap(self) -> tuple:
        return tuple(getattr(self, f) for f in self._fields)

    def restore(self, snap: tuple) -> None:
        for f, v in zip(self._fields, snap):
            setattr(self, f, v)


class Process:
    """A sequence of operations run by one logical process."""

    def __init__(self, pid: int, ops: list[tuple[str, Callable[[], OpMachine]]],
                 handle: Handle | None = None) -> None:
        self.pid = pid
        self.ops = ops
        self.handle = handle if handle is not None else Handle()
        self.idx = 0
        self.machine: OpMachine | None = None
        self.pending: tuple | None = None
        self.op_steps = 0

    def runnable(self) -> bool:
        return self.idx < len(self.ops)

    def op_label(self) -> str:
        return f"{self.ops[self.idx][0]}.{self.idx}"

    def snap(self) -> tuple:
        msnap = None
        if self.machine is not None:
            msnap = self.machine.snap()
        return (self.idx, self.pending, self.op_steps, msnap, self.handle.snap())

    def restore(self, snap: tuple) -> None:
        self.idx, self.pending, self.op_steps, msnap, hsnap = snap
        self.handle.restore(hsnap)
        if msnap is None:
            self.machine = None
        else:
            # Rebuild through the factory so constructor-time context
            # (cell names, ciphers, the handle) is wired up again, then
            # restore the resumable locals.
            m = self.ops[self.idx][1]()
            m.restore(msnap)
            self.machine = m

    def state_key(self) -> tuple:
        msnap = None
        if self.machine is not None:
            msnap = (type(self.machine).__name__, self.machine.arg, self.machine.snap())
        return (self.idx, self.pending, msnap, self.handle.snap())


@dataclass
class System:
    """A memory plus the processes that act on it."""

    memory: SimMemory
    processes: list[Process]
    m: int
    seed: int
    meta: dict = field(default_factory=dict)

    def proc(self, pid: int) -> Process:
        for p in self.processes:
            if p.pid == pid:
                return p
        raise KeyError(pid)

    def snapshot(self) -> tuple:
        return (self.memory.snapshot(), [p.snap() for p in self.processes])

    def restore(self, snap: tuple) -> None:
        mem, procs = snap
        self.memory.restore(mem)
        for p, s in zip(self.processes, procs):
            p.restore(s)


def apply_primitive(mem, prim: tuple) -> Any:
    kind = prim[0]
    if kind == READ:
        return mem.read(prim[1])
    if kind == WRITE:
        mem.write(prim[1], prim[2])
        return None
    if kind == CAS:
        return mem.cas(prim[1], prim[2], prim[3])
    if kind == XOR:
        return mem.fetch_xor(prim[1], prim[2])
    raise ValueError(f"unknown primitive {prim!r}")


def step_process(system: System, proc: Process, events: list[Event] | None,
                 observer=None) -> None:
    """Run one scheduled step of ``proc``: exactly one memory primitive.

    Invocation bookkeeping (operation start) and the response, when the
    primitive just applied was the operation's last, are bundled into the
    same scheduled step; they produce their own trace events.
    """
    if not proc.runnable():
        raise ScheduleError(f"process {proc.pid} has no pending step")
    step = len(events) if events is not None else 0
    label = proc.op_label()
    if proc.machine is None:
        name, factory = proc.ops[proc.idx]
        m = factory()
        proc.machine = m
        proc.pending = m.step(None)
        proc.op_steps = 0
        ev = Event(step, proc.pid, INVOKE, label, None, m.arg, None)
        if events is not None:
            events.append(ev)
            step += 1
        if observer is not None:
            observer(ev, proc)
    prim = proc.pending
    m = proc.machine
    fetched = apply_primitive(system.memory, prim)
    proc.op_steps += 1
    if prim[0] == CAS:
        arg: Any = (prim[2], prim[3])
    elif prim[0] == READ:
        arg = None
    else:
        arg = prim[2]
    ev = Event(step, proc.pid, prim[0], label, prim[1], arg, fetched)
    if events is not None:
        events.append(ev)
        step += 1
    m.note = None  # notes describe the step being applied, never a stale one
    nxt = m.step(fetched)
    if observer is not None:
        observer(ev, proc)  # after the machine advanced: note is fresh
    if nxt is None:
        ev = Event(step, proc.pid, RESPOND, label, None, m.result, None)
        if events is not None:
            events.append(ev)
        proc.idx += 1
        proc.machine = None
        proc.pending = None
        if observer is not None:
            observer(ev, proc)
    else:
        proc.pending = nxt


# ---------------------------------------------------------------------------
# Trace


@dataclass
class Trace:
    seed: int
    m: int
    init: list[tuple[str, str, int]]
    regions: list[tuple[str, str, int]]
    events: list[Event]
    meta: dict = field(default_factory=dict)

    def project(self, pid: int) -> list[Event]:
        """This process's events, with step indices dropped (indistinguishability
        compares what the process itself observed, not global timing)."""
        return [e._replace(step=0) for e in self.events if e.pid == pid]

    def serialize(self) -> str:
        lines = [f"{TRACE_HEADER} seed={self.seed:#x} m={self.m}"]
        for key in sorted(self.meta):
            lines.append(f"meta {key} {ser_val(self.meta[key])}")
        for name, kind, word in self.init:
            lines.append(f"init {name} {kind} {word:#x}")
        for prefix, kind, default in self.regions:
            lines.append(f"region {prefix} {kind} {default:#x}")
        for e in self.events:
            cell = e.cell if e.cell is not None else "-"
            lines.append(
                f"{e.step} {e.pid} {e.kind} {e.op} {cell} "
                f"{ser_val(e.arg)} {ser_val(e.fetched)}"
            )
        return "\n".join(lines) + "\n"


def make_trace(system: System, events: list[Event], schedule=None) -> Trace:
    meta = dict(system.meta)
    if schedule is not None:
        meta["schedule"] = tuple(schedule)
    return Trace(
        seed=system.seed,
        m=system.m,
        init=system.memory.initial_contents(),
        regions=[(p, k, d) for p, (k, d) in sorted(system.memory.regions.items())],
        events=events,
        meta=meta,
    )


def parse_trace(text: str) -> Trace:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(TRACE_HEADER):
        raise ValueError("line 1: missing trace header")
    fields = dict(tok.split("=", 1) for tok in lines[0].split()[2:])
    trace = Trace(seed=int(fields["seed"], 16), m=int(fields["m"]),
                  init=[], regions=[], events=[])
    for no, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line:
            continue
        try:
            tok = line.split()
            if tok[0] == "meta":
                trace.meta[tok[1]] = parse_val(tok[2])
            elif tok[0] == "init":
                trace.init.append((tok[1], tok[2], int(tok[3], 16)))
            elif tok[0] == "region":
                trace.regions.append((tok[1], tok[2], int(tok[3], 16)))
            else:
                step, pid, kind, op, cell, arg, fetched = tok
                trace.events.append(Event(
                    int(step), int(pid), kind, op,
                    None if cell == "-" else cell,
                    parse_val(arg), parse_val(fetched),
                ))
        except (ValueError, IndexError, KeyError) as exc:
            raise ValueError(f"line {no}: cannot parse {line!r}") from exc
    return trace


def ser_val(v: Any) -> str:
    """Serialize an argument/return value: ints in hex, ``-`` for none,
    ``(..)`` tuples, ``[..]`` views, ``{..}`` sets (sorted)."""
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "#t" if v else "#f"
    if isinstance(v, int):
        return f"{v:#x}" if v >= 0 else f"-{-v:#x}"
    if isinstance(v, str):
        return f"'{v}"
    if isinstance(v, tuple):
        return "(" + ",".join(ser_val(x) for x in v) + ")"
    if isinstance(v, list):
        return "[" + ",".join(ser_val(x) for x in v) + "]"
    if isinstance(v, (set, frozenset)):
        return "{" + ",".join(sorted(ser_val(x) for x in v)) + "}"
    raise TypeError(f"cannot serialize {v!r}")


def parse_val(s: str) -> Any:
    v, rest = _parse_val(s)
    if rest:
        raise ValueError(f"trailing data in value {s!r}")
    return v


_CLOSERS = {"(": ")", "[": "]", "{": "}"}


def _parse_val(s: str) -> tuple[Any, str]:
    if not s:
        raise ValueError("empty value")
    c = s[0]
    if c in _CLOSERS:
        closer = _CLOSERS[c]
        items = []
        rest = s[1:]
        if rest.startswith(closer):
            rest = rest[1:]
        else:
            while True:
                v, rest = _parse_val(rest)
                items.append(v)
                if rest.startswith(","):
                    rest = rest[1:]
                elif rest.startswith(closer):
                    rest = rest[1:]
                    break
                else:
                    raise ValueError(f"unterminated {c!r} in value")
        if c == "(":
            return tuple(items), rest
        if c == "[":
            return list(items), rest
        return frozenset(items), rest
    if c == "'":
        j = 1
        while j < len(s) and s[j] not in ",)]}":
            j += 1
        return s[1:j], s[j:]
    if s.startswith("#t"):
        return True, s[2:]
    if s.startswith("#f"):
        return False, s[2:]
    if s.startswith("-") and not s.startswith("-0x"):
        return None, s[1:]
    j = 0
    if s[0] == "-":
        j = 1
    while j < len(s) and s[j] not in ",)]}":
        j += 1
    return int(s[:j], 16), s[j:]


# ---------------------------------------------------------------------------
# Scheduling


def run_schedule(system: System, schedule, record: bool = True,
                 lenient: bool = False, observer=None) -> Trace:
    """Execute ``schedule`` (a sequence of pids) against a fresh system.

    Deterministic: the same system factory output, schedule and seed yield a
    bit-identical trace.  With ``lenient``, slots naming a finished process
    are skipped instead of raising (used by replay transformations whose
    deletions shorten some processes).
    """
    events: list[Event] | None = [] if record else None
    used = []
    for pid in schedule:
        proc = system.proc(pid)
        if not proc.runnable():
            if lenient:
                continue
            raise ScheduleError(f"schedule names finished process {pid}")
        step_process(system, proc, events, observer)
        used.append(pid)
    return make_trace(system, events if events is not None else [], used)


def run_to_completion(system: System, order: list[int] | None = None,
                      record: bool = True) -> Trace:
    """Round-robin (or fixed-priority) run until no process is runnable."""
    events: list[Event] | None = [] if record else None
    used = []
    pids = order if order is not None else [p.pid for p in system.processes]
    while True:
        progressed = False
        for pid in pids:
            proc = system.proc(pid)
            while proc.runnable():
                step_process(system, proc, events)
                used.append(pid)
                progressed = True
        if not progressed:
            break
    return make_trace(system, events if events is not None else [], used)


def enumerate_schedules(make_system: Callable[[], System],
                        max_steps: int | None = None,
                        preemption_bound: int | None = None,
                        record: bool = True) -> Iterator[Trace]:
    """Depth-first enumeration of every distinct interleaving within bounds.

    Yields one trace per maximal (or step-bounded) schedule, each exactly
    once.  With a preemption bound ``b``, only schedules with at most ``b``
    context switches away from a still-runnable process are explored.
    """
    system = make_system()
    events: list[Event] = []
    path: list[int] = []

    def walk(last_pid: int | None, preemptions: int) -> Iterator[Trace]:
        runnable = [p.pid for p in system.processes if p.runnable()]
        if not runnable or (max_steps is not None and len(path) >= max_steps):
            yield Trace(
                seed=system.seed, m=system.m,
                init=system.memory.initial_contents(),
                regions=[(p, (k, d)[0], d) for p, (k, d) in sorted(system.memory.regions.items())],
                events=list(events),
                meta={**system.meta, "schedule": tuple(path)},
            )
            return
        for pid in runnable:
            cost = preemptions
            if last_pid is not None and pid != last_pid and last_pid in runnable:
                cost += 1
                if preemption_bound is not None and cost > preemption_bound:
                    continue
            snap = system.snapshot()
            mark = len(events)
            step_process(system, system.proc(pid), events if record else None)
            path.append(pid)
            yield from walk(pid, cost)
            path.pop()
            del events[mark:]
            system.restore(snap)

    yield from walk(None, 0)
