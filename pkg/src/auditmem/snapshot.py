"""Auditable n-component snapshot.

Each component has one designated updater.  An update writes (sequence
number, value) into its plain component cell, scans all components, and
publishes (vn, view) into an embedded auditable max register, where vn is
the sum of the per-component sequence numbers (unique and increasing, so
vn alone orders publications).  Scans read the max register; audits report
which process saw which view.

Publications carry nonce 0 with the updater id as tiebreak: vn uniqueness
makes real nonces unnecessary.

The plain snapshot underneath uses a repeated-collect scan: read all
components until two consecutive passes agree.  That is lock-free rather
than wait-free, which is observationally equivalent here because the
embedded scan sits inside an update whose callers only require the
published view to be consistent; the classic wait-free construction is a
drop-in replacement for the scan loop.
"""

from __future__ import annotations

from dataclasses import dataclass

from .maxreg import MaxShared, ProjectedAuditOp, ProjectedReadOp, WriteMaxOp, WriterHandle
from .register import BOT
from .substrate import PLAIN, READ, WRITE, Handle, OpMachine

COMP_BITS = 16
VN_BITS = 48


@dataclass
class SnapShared(MaxShared):
    """Max-register cells plus the plain component cells ``S[i]``.

    The max-register payload packs (vn, view): the view occupies
    n * COMP_BITS low bits (component value encoded as v + 1, 0 meaning
    empty) with vn above.
    """

    n: int = 2

    def s_cell(self, i: int) -> str:
        return f"{self.prefix}S[{i}]"

    def setup_snapshot(self, mem) -> None:
        super().setup(mem, 0)  # payload 0 decodes to vn 0, all-empty view
        mem.region(self.prefix + "S", PLAIN, 0)

    def pack_comp(self, sn: int, v) -> int:
        enc = 0 if v is BOT else int(v) + 1
        assert enc < (1 << COMP_BITS)
        return (sn << COMP_BITS) | enc

    def unpack_comp(self, word: int) -> tuple[int, object]:
        enc = word & ((1 << COMP_BITS) - 1)
        return word >> COMP_BITS, (BOT if enc == 0 else enc - 1)

    def pack_payload(self, vn: int, view) -> int:
        enc = 0
        for i, v in enumerate(view):
            enc |= (0 if v is BOT else int(v) + 1) << (i * COMP_BITS)
        assert vn < (1 << VN_BITS)
        return (vn << (self.n * COMP_BITS)) | enc

    def payload_view(self, payload: int):
        view = []
        for i in range(self.n):
            c = (payload >> (i * COMP_BITS)) & ((1 << COMP_BITS) - 1)
            view.append(BOT if c == 0 else c - 1)
        vn = payload >> (self.n * COMP_BITS)
        return (vn, tuple(view))


class UpdaterHandle(Handle):
    """Component sequence number plus the embedded writer's nonce slot."""

    _fields = ("sn", "nonce")

    def __init__(self) -> None:
        self.sn = 0
        self.nonce = 0


class UpdateOp(OpMachine):
    """Write component ``i``, scan all components, publish the versioned
    view into the max register."""

    name = "UPDATE"
    _fields = ("pc", "mysn", "k", "collect", "prev", "payload")

    def __init__(self, shared: SnapShared, handle: UpdaterHandle,
                 i: int, v, wid: int) -> None:
        super().__init__(v)
        self.shared = shared
        self.h = handle
        self.i = i
        self.wid = wid
        self.pc = 0
        self.mysn = 0
        self.k = 0
        self.collect: tuple = ()
        self.prev: tuple | None = None
        self.payload = 0
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
            self.h.sn += 1
            self.mysn = self.h.sn
            self.pc = 1
            return (WRITE, sh.s_cell(self.i), sh.pack_comp(self.mysn, self.arg))
        if self.pc == 1:
            self.k = 0
            self.collect = ()
            self.pc = 2
            return (READ, sh.s_cell(0))
        if self.pc == 2:
            self.collect = self.collect + (fetched,)
            self.k += 1
            if self.k < sh.n:
                return (READ, sh.s_cell(self.k))
            if self.collect != self.prev:
                self.prev = self.collect
                self.pc = 1
                return self.step(None)  # start the confirming pass
            pairs = [sh.unpack_comp(w) for w in self.collect]
            vn = sum(sn for sn, _ in pairs)
            view = tuple(v for _, v in pairs)
            self.payload = sh.pack_payload(vn, view)
            self.note = ("update-publish", vn, view)
            self.sub = self._make_sub()
            self.pc = 3
            return self.sub.step(None)
        self.sub.note = None
        prim = self.sub.step(fetched)
        self.note = self.sub.note
        if prim is None:
            self.result = None
        return prim


class ScanOp(ProjectedReadOp):
    """Return the view of the largest published versioned view."""

    name = "SCAN"

    def project(self, value):
        _vn, view = value
        return view


class SnapAuditOp(ProjectedAuditOp):
    """Report (reader, view) pairs with version numbers stripped."""

    name = "AUDIT"

    def project(self, value):
        _vn, view = value
        return view
