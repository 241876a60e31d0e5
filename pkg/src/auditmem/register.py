"""Auditable multi-writer multi-reader register.

One atomic control cell ``R`` packs (sequence number, current value,
encrypted tracking bits).  ``SN`` publishes the sequence number so repeat
readers of an unchanged value can return silently without touching ``R``.
Two growable history regions record evicted values (``V[s]``, plain cells)
and the accumulated reader sets per sequence number (``B[s]``).

``B[s]`` holds the decrypted reader-set word for sequence number ``s`` in a
single atomic cell that writers grow with a compare&swap union loop.  (A
per-reader array of plain boolean cells would force auditors to scan m
cells per sequence number; the packed cell keeps both the writer and the
auditor step counts within their budgets and survives two stale writers
racing on the same index.)

Reads are wait-free in at most 4 primitive steps, writes finish within
m+1 passes of the helping loop, and audits take 2 + 2*(rsn - lsa)
primitive steps for a window of rsn - lsa sequence numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .pads import PadCipher, insert_mask
from .substrate import ATOMIC, CAS, PLAIN, READ, WRITE, XOR, Handle, OpMachine

BOT = None


@dataclass(frozen=True)
class Layout:
    """Bit layout of the packed control word (bits low, value middle,
    sequence number in the remaining high bits)."""

    m: int
    value_bits: int = 64

    def pack(self, seq: int, val_enc: int, bits: int) -> int:
        assert 0 <= bits < (1 << self.m)
        assert 0 <= val_enc < (1 << self.value_bits)
        return bits | (val_enc << self.m) | (seq << (self.m + self.value_bits))

    def unpack(self, word: int) -> tuple[int, int, int]:
        bits = word & ((1 << self.m) - 1)
        val_enc = (word >> self.m) & ((1 << self.value_bits) - 1)
        seq = word >> (self.m + self.value_bits)
        return seq, val_enc, bits


# 64-bit layout for the threaded backend: [seq:32 | value:16 | bits:16].
NATIVE_LAYOUT = Layout(m=16, value_bits=16)


def bits_of(word: int, m: int) -> frozenset[int]:
    return frozenset(j for j in range(m) if word & (1 << j))


def word_of(readers) -> int:
    w = 0
    for j in readers:
        w |= 1 << j
    return w


@dataclass
class RegisterShared:
    """Cell names, layout and pad cipher shared by all processes.

    ``prefix`` namespaces the cells so a register instance can live inside
    a larger object (the snapshot embeds one as ``M.R`` etc.).
    """

    layout: Layout
    cipher: PadCipher
    prefix: str = ""

    def __post_init__(self) -> None:
        self.R = self.prefix + "R"
        self.SN = self.prefix + "SN"
        self.v_prefix = self.prefix + "V"
        self.b_prefix = self.prefix + "B"

    def v_cell(self, s: int) -> str:
        return f"{self.v_prefix}[{s}]"

    def b_cell(self, s: int) -> str:
        return f"{self.b_prefix}[{s}]"

    def setup(self, mem, v0) -> None:
        mem.new_cell(self.R, self.layout.pack(0, self.encode_value(v0),
                                              self.cipher.mask(0)), ATOMIC)
        mem.new_cell(self.SN, 0, ATOMIC)
        mem.region(self.v_prefix, PLAIN, 0)
        mem.region(self.b_prefix, ATOMIC, 0)

    # Encoded value 0 is reserved for the empty history cell.
    def encode_value(self, v) -> int:
        return int(v) + 1

    def decode_value(self, enc: int):
        return BOT if enc == 0 else enc - 1

    def history_enc(self, val_enc: int) -> int:
        """What a helping writer stores in V[s] for control value ``val_enc``
        (the max register strips the nonce here)."""
        return val_enc

    def history_value(self, enc: int):
        """What audits report for a history cell holding ``enc``."""
        return self.decode_value(enc)

    def result_value(self, val_enc: int):
        """What reads and audits report for control value ``val_enc``."""
        return self.decode_value(val_enc)


class ReaderHandle(Handle):
    """Reader-local cache: last observed sequence number and its value.

    Both start empty, so a process's first read is always direct (and
    therefore tracked); a silent first read would be effective without
    ever touching the control word."""

    _fields = ("prev_sn", "prev_val")

    def __init__(self) -> None:
        self.prev_sn = None
        self.prev_val = None


class AuditorHandle(Handle):
    """Auditor-local cursor and the accumulated (reader, value) pairs."""

    _fields = ("lsa", "acc")

    def __init__(self) -> None:
        self.lsa = 0
        self.acc: frozenset = frozenset()


class ReadOp(OpMachine):
    """Return the current value; announce the read via fetch&xor unless the
    sequence number is unchanged since this reader's previous read."""

    name = "READ"
    _fields = ("pc", "fseq", "fval")

    def __init__(self, shared: RegisterShared, handle: ReaderHandle, j: int) -> None:
        super().__init__(None)
        self.shared = shared
        self.h = handle
        self.j = j
        self.pc = 0
        self.fseq = 0
        self.fval = None

    def step(self, fetched):
        sh = self.shared
        if self.pc == 0:
            self.pc = 1
            return (READ, sh.SN)
        if self.pc == 1:
            if fetched == self.h.prev_sn:
                self.result = self.h.prev_val
                self.note = ("read-silent", fetched, self.h.prev_val)
                return None
            self.pc = 2
            return (XOR, sh.R, insert_mask(self.j, sh.layout.m))
        if self.pc == 2:
            seq, val_enc, _bits = sh.layout.unpack(fetched)
            self.fseq = seq
            self.fval = sh.result_value(val_enc)
            self.note = ("read-direct", seq, self.fval)
            self.pc = 3
            return (CAS, sh.SN, seq - 1, seq)
        self.h.prev_sn = self.fseq
        self.h.prev_val = self.fval
        self.result = self.fval
        return None


class WriteOp(OpMachine):
    """Install a new value at the next sequence number, helping evict the
    history of every overtaken value on the way."""

    name = "WRITE"
    _fields = ("pc", "sn", "lword", "lseq", "bexp", "bnew", "visible", "iters")

    def __init__(self, shared: RegisterShared, v) -> None:
        super().__init__(v)
        self.shared = shared
        self.pc = 0
        self.sn = 0
        self.lword = 0
        self.lseq = 0
        self.bexp = 0
        self.bnew = 0
        self.visible = False
        self.iters = 0

    def install_enc(self) -> int:
        return self.shared.encode_value(self.arg)

    def give_up(self, lseq: int, lval_enc: int) -> bool:
        """Exit the helping loop without installing (sequence overtaken)."""
        return lseq >= self.sn

    def step(self, fetched):
        sh = self.shared
        if self.pc == 0:
            self.pc = 1
            return (READ, sh.SN)
        if self.pc == 1:
            self.sn = fetched + 1
            self.pc = 2
            return (READ, sh.R)
        if self.pc == 2:
            self.iters += 1
            self.lword = fetched
            lseq, lval_enc, _bits = sh.layout.unpack(fetched)
            self.lseq = lseq
            if self.give_up(lseq, lval_enc):
                self.visible = False
                self.note = ("write-silent", self.sn)
                self.pc = 9
                return (CAS, sh.SN, self.sn - 1, self.sn)
            self.pc = 3
            return (WRITE, sh.v_cell(lseq), sh.history_enc(lval_enc))
        if self.pc == 3:
            self.pc = 4
            return (READ, sh.b_cell(self.lseq))
        if self.pc == 4 or self.pc == 5:
            if self.pc == 4:
                old = fetched
            elif fetched != self.bexp:
                old = fetched  # lost a union race; retry on the fetched word
            else:
                self.pc = 6
                return (CAS, sh.R, self.lword,
                        sh.layout.pack(self.sn, self.install_enc(),
                                       sh.cipher.mask(self.sn)))
            _seq, _val, bits = sh.layout.unpack(self.lword)
            mask = (1 << sh.layout.m) - 1
            diff = (bits ^ sh.cipher.mask(self.lseq)) & mask
            self.bexp = old
            self.bnew = old | diff
            self.pc = 5
            return (CAS, sh.b_cell(self.lseq), old, self.bnew)
        if self.pc == 6:
            if fetched == self.lword:
                self.visible = True
                self.note = ("write-visible", self.sn)
                self.pc = 9
                return (CAS, sh.SN, self.sn - 1, self.sn)
            self.pc = 2
            return (READ, sh.R)
        self.result = None
        return None


class AuditOp(OpMachine):
    """Collect every (reader, value) pair recorded since this auditor's
    previous audit and return the accumulated set."""

    name = "AUDIT"
    _fields = ("pc", "rsn", "rval", "new_pairs", "s", "vtmp")

    def __init__(self, shared: RegisterShared, handle: AuditorHandle) -> None:
        super().__init__(None)
        self.shared = shared
        self.h = handle
        self.pc = 0
        self.rsn = 0
        self.rval = None
        self.new_pairs: frozenset = frozenset()
        self.s = 0
        self.vtmp = None

    def _advance(self):
        sh = self.shared
        if self.s < self.rsn:
            self.pc = 2
            return (READ, sh.v_cell(self.s))
        self.pc = 4
        return (CAS, sh.SN, self.rsn - 1, self.rsn)

    def step(self, fetched):
        sh = self.shared
        if self.pc == 0:
            self.pc = 1
            return (READ, sh.R)
        if self.pc == 1:
            rsn, rval_enc, rbits = sh.layout.unpack(fetched)
            self.rsn = rsn
            self.rval = sh.result_value(rval_enc)
            current = frozenset((j, self.rval)
                                for j in sh.cipher.decode(rbits, rsn))
            self.new_pairs = current
            self.s = self.h.lsa
            self.note = ("audit-at", rsn)
            return self._advance()
        if self.pc == 2:
            self.vtmp = sh.history_value(fetched)
            self.pc = 3
            return (READ, sh.b_cell(self.s))
        if self.pc == 3:
            readers = bits_of(fetched, sh.layout.m)
            self.new_pairs = self.new_pairs | frozenset(
                (j, self.vtmp) for j in readers)
            self.s += 1
            return self._advance()
        self.h.lsa = self.rsn
        self.h.acc = self.h.acc | self.new_pairs
        self.result = self.h.acc
        return None
