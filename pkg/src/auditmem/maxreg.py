"""Auditable max register.

Built over the auditable register cells plus one plain max register ``M``
that always holds the largest value submitted so far.  Written payloads are
paired with a per-writer nonce so equal payloads from different writes stay
distinguishable; reads and audits strip the nonce before reporting.

The install loop differs from the plain register write: a writer gives up
as soon as the control cell already holds a value at least as large as its
own, and a successful install publishes the current maximum read from ``M``
rather than the writer's own value (so a slow writer helps a larger
concurrent value into place instead of regressing the register).

``M`` is kept in a single atomic cell updated by a compare&swap maximum
loop.  That loop is lock-free rather than wait-free; a cas failure means a
strictly larger value landed, so each writer retries at most once per
larger concurrent write.
"""

from __future__ import annotations

from dataclasses import dataclass

from .register import BOT, AuditOp, Layout, ReadOp, RegisterShared
from .substrate import ATOMIC, CAS, READ, WRITE, Handle, OpMachine

NONCE_BITS = 64
TIE_BITS = 8


@dataclass
class MaxShared(RegisterShared):
    """Cell names and codecs for one max-register instance.

    Control values are ``(payload + 1) << 72 | nonce << 8 | writer`` so that
    integer order on encodings is lexicographic order on (payload, nonce,
    writer id).  History cells store the bare payload encoding.
    """

    def __post_init__(self) -> None:
        super().__post_init__()
        self.M = self.prefix + "M"

    def enc_nonced(self, payload: int, nonce: int, writer: int) -> int:
        assert 0 <= nonce < (1 << NONCE_BITS)
        assert 0 <= writer < (1 << TIE_BITS)
        return (((payload + 1) << NONCE_BITS) | nonce) << TIE_BITS | writer

    def split(self, enc: int) -> tuple[int, int, int] | None:
        if enc == 0:
            return None
        writer = enc & ((1 << TIE_BITS) - 1)
        nonce = (enc >> TIE_BITS) & ((1 << NONCE_BITS) - 1)
        payload = (enc >> (TIE_BITS + NONCE_BITS)) - 1
        return payload, nonce, writer

    def encode_value(self, v0) -> int:
        return self.enc_nonced(int(v0), 0, 0)

    def decode_value(self, enc: int):
        parts = self.split(enc)
        return BOT if parts is None else parts[0]

    def history_enc(self, val_enc: int) -> int:
        parts = self.split(val_enc)
        return 0 if parts is None else parts[0] + 1

    def payload_view(self, payload: int):
        """Decode a bare payload into the caller-facing value (identity for
        plain max registers; the snapshot and the versioned adapter pack
        structured values into the payload)."""
        return payload

    def history_value(self, enc: int):
        return BOT if enc == 0 else self.payload_view(enc - 1)

    def result_value(self, val_enc: int):
        payload = self.decode_value(val_enc)
        return BOT if payload is BOT else self.payload_view(payload)

    def setup(self, mem, v0) -> None:
        super().setup(mem, v0)
        mem.new_cell(self.M, self.encode_value(v0), ATOMIC)


def max_layout(m: int, payload_bits: int = 64) -> Layout:
    return Layout(m=m, value_bits=payload_bits + 1 + NONCE_BITS + TIE_BITS)


class WriterHandle(Handle):
    """Per-writer nonce counter (monotone; forced nonces only move it up)."""

    _fields = ("nonce",)

    def __init__(self) -> None:
        self.nonce = 0


class WriteMaxOp(OpMachine):
    """Raise the register to ``w`` (no effect if already larger).

    ``force_nonce`` pins the nonce instead of drawing the next counter
    value; replay transformations use it to substitute a written value
    while keeping every comparison outcome aligned.
    """

    name = "WRITEMAX"
    _fields = ("pc", "venc", "sn", "lword", "lseq", "lval_enc", "mval",
               "mcur", "bexp", "bnew", "iters")

    def __init__(self, shared: MaxShared, handle: WriterHandle, wid: int,
                 w: int, force_nonce: int | None = None) -> None:
        super().__init__(w)
        self.shared = shared
        self.h = handle
        self.wid = wid
        self.force_nonce = force_nonce
        self.pc = 0
        self.venc = 0
        self.sn = 0
        self.lword = 0
        self.lseq = 0
        self.lval_enc = 0
        self.mval = 0
        self.mcur = 0
        self.bexp = 0
        self.bnew = 0
        self.iters = 0

    def step(self, fetched):
        sh = self.shared
        if self.pc == 0:
            n = self.force_nonce if self.force_nonce is not None else self.h.nonce + 1
            self.h.nonce = max(self.h.nonce, n)
            self.venc = sh.enc_nonced(self.arg, n, self.wid)
            self.note = ("maxw-value", self.venc)
            self.pc = 1
            return (READ, sh.M)
        if self.pc in (1, 2):
            if self.pc == 2 and fetched == self.mcur:
                self.pc = 3
                return (READ, sh.SN)
            if fetched >= self.venc:
                self.pc = 3
                return (READ, sh.SN)
            self.mcur = fetched
            self.pc = 2
            return (CAS, sh.M, fetched, self.venc)
        if self.pc == 3:
            self.sn = fetched + 1
            self.pc = 4
            return (READ, sh.R)
        if self.pc == 4:
            self.iters += 1
            self.lword = fetched
            lseq, lval_enc, _bits = sh.layout.unpack(fetched)
            self.lseq = lseq
            self.lval_enc = lval_enc
            if lval_enc >= self.venc:
                self.sn = lseq
                self.note = ("maxw-silent", lseq)
                self.pc = 9
                return (CAS, sh.SN, lseq - 1, lseq)
            if lseq >= self.sn:
                self.pc = 5
                return (CAS, sh.SN, self.sn - 1, self.sn)
            self.pc = 6
            return (READ, sh.M)
        if self.pc == 5:
            self.pc = 3
            return (READ, sh.SN)
        if self.pc == 6:
            self.mval = fetched
            self.pc = 7
            return (WRITE, sh.v_cell(self.lseq), sh.history_enc(self.lval_enc))
        if self.pc == 7:
            self.pc = 8
            return (READ, sh.b_cell(self.lseq))
        if self.pc in (8, 11):
            if self.pc == 8:
                old = fetched
            elif fetched != self.bexp:
                old = fetched  # lost a union race; retry on the fetched word
            else:
                self.pc = 10
                return (CAS, sh.R, self.lword,
                        sh.layout.pack(self.sn, self.mval,
                                       sh.cipher.mask(self.sn)))
            _seq, _val, bits = sh.layout.unpack(self.lword)
            mask = (1 << sh.layout.m) - 1
            diff = (bits ^ sh.cipher.mask(self.lseq)) & mask
            self.bexp = old
            self.bnew = old | diff
            self.pc = 11
            return (CAS, sh.b_cell(self.lseq), old, self.bnew)
        if self.pc == 10:
            if fetched == self.lword:
                self.note = ("maxw-install", self.sn, self.mval)
                self.pc = 9
                return (CAS, sh.SN, self.sn - 1, self.sn)
            self.pc = 4
            return (READ, sh.R)
        self.result = None
        return None


class ProjectedReadOp(ReadOp):
    """A read whose caller-facing result is a projection of the stored
    value (the snapshot and the adapter strip the version number)."""

    def project(self, value):
        return value

    def step(self, fetched):
        prim = super().step(fetched)
        if prim is None:
            self.result = self.project(self.result)
        return prim


class ProjectedAuditOp(AuditOp):
    """An audit that projects each reported value before returning."""

    def project(self, value):
        return value

    def step(self, fetched):
        prim = super().step(fetched)
        if prim is None:
            self.result = frozenset((j, self.project(v)) for j, v in self.result)
        return prim
