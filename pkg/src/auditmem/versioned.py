"""Auditable adapter for versioned types.

A versioned type is a sequential object whose reads return (output,
version number) with the version strictly increasing across updates.  The
adapter keeps the wrapped implementation in a single atomic cell updated
by a compare&swap loop, and publishes every (vn, output) pair into an
embedded auditable max register ordered by vn.  Reads return the max
register's payload with the version stripped; audits report which process
read which output.

Version uniqueness plays the role the nonce plays in the bare max
register, so publications carry nonce 0 with the updater id as tiebreak.
The post-update read of the wrapped implementation is a plain (non-
audited) read: it belongs to the updater role, not to a tracked reader.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .maxreg import MaxShared, ProjectedAuditOp, ProjectedReadOp, WriteMaxOp, WriterHandle
from .substrate import ATOMIC, CAS, READ, Handle, OpMachine

STATE_BITS = 32
OUT_BITS = 32


@dataclass(frozen=True)
class TypeSpec:
    """A sequential type: initial state, transition g, and output f.

    States, inputs and outputs are small non-negative integers so the
    whole state fits one memory word.
    """

    name: str
    q0: int
    g: Callable[[int, int], int]  # (input, state) -> state
    f: Callable[[int], int]  # state -> output


def versioned_counter() -> TypeSpec:
    """Counter: update increments, read returns the count (vn = count)."""
    return TypeSpec("counter", 0, lambda _v, q: q + 1, lambda q: q)


def versioned_clock() -> TypeSpec:
    """Logical clock: update(v) sets max(q, v) + 1, read returns the time
    (vn = number of ticks)."""
    return TypeSpec("clock", 0, lambda v, q: max(q, v) + 1, lambda q: q)


@dataclass
class AdapterShared(MaxShared):
    """Max-register cells plus the wrapped implementation's cell ``T``.

    ``T`` packs (vn, state); the max-register payload packs (vn, output).
    """

    spec: TypeSpec = field(default_factory=versioned_counter)

    def __post_init__(self) -> None:
        super().__post_init__()
        self.T = self.prefix + "T"

    def setup_adapter(self, mem) -> None:
        super().setup(mem, self.pack_payload(0, self.spec.f(self.spec.q0)))
        mem.new_cell(self.T, self.pack_state(0, self.spec.q0), ATOMIC)

    def pack_state(self, vn: int, q: int) -> int:
        assert 0 <= q < (1 << STATE_BITS)
        return (vn << STATE_BITS) | q

    def unpack_state(self, word: int) -> tuple[int, int]:
        return word >> STATE_BITS, word & ((1 << STATE_BITS) - 1)

    def pack_payload(self, vn: int, o: int) -> int:
        assert 0 <= o < (1 << OUT_BITS)
        return (vn << OUT_BITS) | o

    def payload_view(self, payload: int):
        return payload >> OUT_BITS, payload & ((1 << OUT_BITS) - 1)


class SequentialVersioned:
    """Pure-state reference: apply f/g directly, no shared memory.

    The sequential-equivalence oracle runs operation lists against this
    and against the adapter under a sequential schedule.
    """

    def __init__(self, spec: TypeSpec) -> None:
        self.spec = spec
        self.q = spec.q0
        self.vn = 0

    def update(self, v: int) -> None:
        self.q = self.spec.g(v, self.q)
        self.vn += 1

    def read(self) -> tuple[int, int]:
        return self.spec.f(self.q), self.vn


class AdapterUpdateOp(OpMachine):
    """Apply the update to the wrapped type, read it back, publish the
    versioned output into the max register."""

    name = "UPDATE"
    _fields = ("pc", "payload", "exp")

    def __init__(self, shared: AdapterShared, handle: WriterHandle,
                 v: int, wid: int) -> None:
        super().__init__(v)
        self.shared = shared
        self.h = handle
        self.wid = wid
        self.pc = 0
        self.payload = 0
        self.exp = 0
        self.sub: WriteMaxOp | None = None

    def _make_sub(self) -> WriteMaxOp:
        return WriteMaxOp(self.shared, self.h, self.wid, self.payload,
                          force_nonce=0)

    def snap(self) -> tuple:
        own = tuple(getattr(self, f) for f in self._fields)
        return (own, self.sub.snap() if self.sub is not None else None)

    def restore(self, snap: tuple) -> None:
        own, subsnap = snap
        for f, v in zip(self._fields, own):
            setattr(self, f, v)
        if subsnap is None:
            self.sub = None
        else:
            self.sub = self._make_sub()
            self.sub.restore(subsnap)

    def step(self, fetched):
        sh = self.shared
        if self.pc == 0:
            self.pc = 1
            return (READ, sh.T)
        if self.pc == 1:
            vn, q = sh.unpack_state(fetched)
            self.pc = 2
            self.exp = fetched
            return (CAS, sh.T, fetched,
                    sh.pack_state(vn + 1, sh.spec.g(self.arg, q)))
        if self.pc == 2:
            if fetched != self.exp:  # lost the race; recompute on current
                vn, q = sh.unpack_state(fetched)
                self.exp = fetched
                return (CAS, sh.T, fetched,
                        sh.pack_state(vn + 1, sh.spec.g(self.arg, q)))
            self.pc = 3
            return (READ, sh.T)
        if self.pc == 3:
            vn, q = sh.unpack_state(fetched)
            o = sh.spec.f(q)
            self.payload = sh.pack_payload(vn, o)
            self.note = ("update-publish", vn, o)
            self.sub = self._make_sub()
            self.pc = 4
            return self.sub.step(None)
        self.sub.note = None
        prim = self.sub.step(fetched)
        self.note = self.sub.note
        if prim is None:
            self.result = None
        return prim


class AdapterReadOp(ProjectedReadOp):
    """Return the wrapped type's output, version stripped."""

    name = "READ"

    def project(self, value):
        _vn, o = value
        return o


class AdapterAuditOp(ProjectedAuditOp):
    """Report (reader, output) pairs, versions stripped."""

    name = "AUDIT"

    def project(self, value):
        _vn, o = value
        return o
