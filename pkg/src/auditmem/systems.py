"""System builders: wire operation scripts into processes over one object.

A script maps each process id to the list of operations it will run, e.g.
``{0: [("write", 5)], 1: [("read", None)]}``.  The builder derives roles
from the operation names (writers, readers with tracking-bit indices,
auditors, updaters with component indices), allocates cells, and returns a
ready :class:`~auditmem.substrate.System`.

The same builder serves the simulated scheduler, the interleaving
enumerators and the threaded stress driver, and it accepts override hooks
(a substituted pad cipher, forced nonces, edited scripts) used by the
replay transformations.
"""

from __future__ import annotations

from dataclasses import dataclass

from .maxreg import MaxShared, WriteMaxOp, max_layout
from .pads import DEFAULT_TEST_SEED, PadCipher, PadKey
from .register import (AuditOp, Layout, ReadOp, RegisterShared, WriteOp)
from .snapshot import (COMP_BITS, VN_BITS, ScanOp, SnapAuditOp, SnapShared,
                       UpdateOp)
from .substrate import Handle, Process, SimMemory, System
from .versioned import (AdapterAuditOp, AdapterReadOp, AdapterShared,
                        AdapterUpdateOp, OUT_BITS, TypeSpec,
                        versioned_clock, versioned_counter)

OBJECT_KINDS = ("register", "maxreg", "snapshot", "counter", "clock")

_ALIASES = {
    "maxreg": {"write": "write_max", "writemax": "write_max"},
    "snapshot": {"write": "update", "read": "scan"},
    "counter": {"write": "update"},
    "clock": {"write": "update"},
}

_READING = {"read", "scan"}
_WRITING = {"write", "write_max", "update"}


@dataclass(frozen=True)
class OpSpec:
    name: str
    arg: int | None = None
    force_nonce: int | None = None


class ProcHandle(Handle):
    """One handle covering every role a process might play.

    The read cache starts empty (first read always direct, hence
    tracked); the audit cursor starts at sequence number 0."""

    _fields = ("prev_sn", "prev_val", "lsa", "acc", "nonce", "sn")

    def __init__(self) -> None:
        self.prev_sn = None
        self.prev_val = None
        self.lsa = 0
        self.acc: frozenset = frozenset()
        self.nonce = 0
        self.sn = 0


def normalize_scripts(kind: str, scripts: dict) -> dict[int, list[OpSpec]]:
    if kind not in OBJECT_KINDS:
        raise ValueError(f"unknown object kind {kind!r}")
    alias = _ALIASES.get(kind, {})
    out: dict[int, list[OpSpec]] = {}
    for pid, ops in scripts.items():
        lst = []
        for op in ops:
            if isinstance(op, OpSpec):
                spec = op
            elif isinstance(op, str):
                spec = OpSpec(op)
            else:
                spec = OpSpec(*op)
            name = alias.get(spec.name, spec.name)
            if name != spec.name:
                spec = OpSpec(name, spec.arg, spec.force_nonce)
            lst.append(spec)
        out[int(pid)] = lst
    return out


def parse_script(text: str) -> dict[int, list[tuple]]:
    """Parse the op-per-line format ``p<pid> <op> [arg]``."""
    scripts: dict[int, list[tuple]] = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        if not tok[0].startswith("p") or len(tok) not in (2, 3):
            raise ValueError(f"script line {no}: cannot parse {raw!r}")
        pid = int(tok[0][1:])
        arg = int(tok[2], 0) if len(tok) == 3 else None
        scripts.setdefault(pid, []).append((tok[1], arg))
    return scripts


def default_scripts(kind: str, writers: int = 0, readers: int = 0,
                    auditors: int = 0, ops_per_writer: int = 1,
                    ops_per_reader: int = 1, ops_per_auditor: int = 1) -> dict:
    """Distinct write values per writer; plain reads and audits."""
    wname = {"register": "write", "maxreg": "write_max",
             "snapshot": "update", "counter": "update",
             "clock": "update"}[kind]
    rname = "scan" if kind == "snapshot" else "read"
    scripts: dict[int, list[tuple]] = {}
    pid = 0
    val = 1
    for _ in range(writers):
        scripts[pid] = []
        for _ in range(ops_per_writer):
            scripts[pid].append((wname, val))
            val += 1
        pid += 1
    for _ in range(readers):
        scripts[pid] = [(rname, None)] * ops_per_reader
        pid += 1
    for _ in range(auditors):
        scripts[pid] = [("audit", None)] * ops_per_auditor
        pid += 1
    return scripts


def make_system(kind: str, scripts: dict, *, seed: int = DEFAULT_TEST_SEED,
                v0: int = 0, m: int | None = None,
                cipher: PadCipher | None = None, memory=None,
                payload_bits: int = 32, roles=None,
                components: int | None = None) -> System:
    scripts = normalize_scripts(kind, scripts)
    pids = sorted(scripts)

    if roles is not None:
        # Pin the role indices of a recorded run, so reruns with edited
        # (possibly emptied) scripts keep every process's tracking bit
        # and writer id.
        readers = [p for (p, r, _i) in roles if r == "reader"]
        writers = [p for (p, r, _i) in roles if r == "writer"]
        auditors = [p for (p, r, _i) in roles if r == "auditor"]
    else:
        readers = [p for p in pids
                   if any(o.name in _READING for o in scripts[p])]
        writers = [p for p in pids
                   if any(o.name in _WRITING for o in scripts[p])]
        auditors = [p for p in pids
                    if any(o.name == "audit" for o in scripts[p])]
    m_eff = m if m is not None else max(1, len(readers))
    if len(readers) > m_eff:
        raise ValueError(f"{len(readers)} reading processes but m={m_eff}")
    if roles is not None:
        jmap = {p: i for (p, r, i) in roles if r == "reader"}
        wmap = {p: i for (p, r, i) in roles if r == "writer"}
    else:
        jmap = {p: j for j, p in enumerate(readers)}
        wmap = {p: w for w, p in enumerate(writers)}

    if cipher is None:
        cipher = PadCipher(PadKey.from_seed(seed), m_eff)
    elif cipher.m != m_eff:
        raise ValueError(f"cipher is for m={cipher.m}, system needs {m_eff}")
    mem = memory if memory is not None else SimMemory()

    if kind == "register":
        shared = RegisterShared(Layout(m_eff, payload_bits), cipher)
        shared.setup(mem, v0)
    elif kind == "maxreg":
        shared = MaxShared(max_layout(m_eff, payload_bits), cipher)
        shared.setup(mem, v0)
    elif kind == "snapshot":
        n = components if components is not None else max(1, len(writers))
        if any(w >= n for w in wmap.values()):
            raise ValueError(f"updater index out of range for {n} components")
        bits = 1 + VN_BITS + n * COMP_BITS
        shared = SnapShared(max_layout(m_eff, bits), cipher, n=n)
        shared.setup_snapshot(mem)
    else:
        spec = versioned_counter() if kind == "counter" else versioned_clock()
        bits = 1 + VN_BITS + OUT_BITS
        shared = AdapterShared(max_layout(m_eff, bits), cipher, spec=spec)
        shared.setup_adapter(mem)

    processes = []
    for pid in pids:
        handle = ProcHandle()
        ops = []
        for op in scripts[pid]:
            ops.append((op.name.upper().replace("_", ""),
                        _factory(kind, shared, handle, pid, op, jmap, wmap)))
        processes.append(Process(pid, ops, handle))

    roles = []
    for p in pids:
        if p in wmap:
            roles.append((p, "writer", wmap[p]))
        if p in jmap:
            roles.append((p, "reader", jmap[p]))
        if p in auditors:
            roles.append((p, "auditor", 0))
    meta = {
        "object": kind,
        "v0": v0,
        "components": shared.n if kind == "snapshot" else None,
        "roles": tuple(roles),
        "scripts": tuple(
            (p, tuple((o.name, o.arg, o.force_nonce) for o in scripts[p]))
            for p in pids),
    }
    system = System(mem, processes, m_eff, seed, meta)
    system.shared = shared
    return system


def _factory(kind, shared, handle, pid, op: OpSpec, jmap, wmap):
    # Bound late so every call builds a fresh machine over the same handle.
    name = op.name
    if name == "write":
        return lambda: WriteOp(shared, op.arg)
    if name == "write_max":
        return lambda: WriteMaxOp(shared, handle, wmap[pid], op.arg,
                                  force_nonce=op.force_nonce)
    if name == "read":
        if kind in ("counter", "clock"):
            return lambda: AdapterReadOp(shared, handle, jmap[pid])
        return lambda: ReadOp(shared, handle, jmap[pid])
    if name == "scan":
        return lambda: ScanOp(shared, handle, jmap[pid])
    if name == "audit":
        if kind == "snapshot":
            return lambda: SnapAuditOp(shared, handle)
        if kind in ("counter", "clock"):
            return lambda: AdapterAuditOp(shared, handle)
        return lambda: AuditOp(shared, handle)
    if name == "update":
        if kind == "snapshot":
            return lambda: UpdateOp(shared, handle, wmap[pid], op.arg,
                                    wmap[pid])
        return lambda: AdapterUpdateOp(shared, handle, op.arg, wmap[pid])
    raise ValueError(f"operation {name!r} not valid for object {kind!r}")


def system_from_meta(meta: dict, seed: int, *, m: int | None = None,
                     cipher: PadCipher | None = None,
                     memory=None) -> System:
    """Rebuild the system a recorded trace was produced by."""
    scripts = {pid: [OpSpec(n, a, f) for (n, a, f) in ops]
               for pid, ops in meta["scripts"]}
    return make_system(meta["object"], scripts, seed=seed, v0=meta["v0"],
                       m=m, cipher=cipher, memory=memory,
                       roles=meta.get("roles"),
                       components=meta.get("components"))
