"""Per-sequence-number pads shared by writers and auditors.

The tracking bits of the control word encrypt the set of readers of the
current value: an empty set at sequence number ``s`` is encoded as the mask
``mask_for(key, s)``, and reader ``j`` inserts itself by XORing bit ``j``.
Decoding compares the cipher with the mask bit by bit.

Pads are derived by a counter-mode keystream from a seeded pseudorandom
function (BLAKE2b) rather than being truly random: executions must be
reproducible under the simulated scheduler and the sequence-number space is
unbounded.  This weakens the secrecy guarantee from information-theoretic
to computational; see the README.
"""

from __future__ import annotations

import hashlib
import secrets
from dataclasses import dataclass, field

KEY_BYTES = 32

DEFAULT_TEST_SEED = 0xA0D17AB1E

__all__ = [
    "PadKey",
    "PadCipher",
    "DEFAULT_TEST_SEED",
    "mask_for",
    "decode",
    "insert_mask",
]


@dataclass(frozen=True)
class PadKey:
    """A 256-bit seed known to writers and auditors only."""

    material: bytes

    def __post_init__(self) -> None:
        if len(self.material) != KEY_BYTES:
            raise ValueError(f"pad key must be {KEY_BYTES} bytes")

    @classmethod
    def from_seed(cls, seed: int) -> "PadKey":
        """Derive a key deterministically from an integer seed."""
        raw = seed.to_bytes((max(seed.bit_length(), 1) + 7) // 8, "big")
        return cls(hashlib.blake2b(raw, digest_size=KEY_BYTES, person=b"pad-key").digest())

    @classmethod
    def fresh(cls) -> "PadKey":
        """A cryptographically random key (non-reproducible runs)."""
        return cls(secrets.token_bytes(KEY_BYTES))


def mask_for(key: PadKey, seq: int, m: int) -> int:
    """The m-bit pad for sequence number ``seq``.

    Deterministic in (key, seq); masks for distinct seq are outputs of the
    keyed PRF on distinct inputs.
    """
    if seq < 0:
        raise ValueError("seq must be non-negative")
    nbytes = (m + 7) // 8 if m else 1
    digest = hashlib.blake2b(
        seq.to_bytes(16, "big"), key=key.material, digest_size=nbytes
    ).digest()
    return int.from_bytes(digest, "big") & ((1 << m) - 1)


def insert_mask(j: int, m: int) -> int:
    """The word 2^j that toggles reader ``j``'s tracking bit."""
    if not 0 <= j < m:
        raise ValueError(f"reader id {j} out of range for m={m}")
    return 1 << j


def decode(bits: int, key: PadKey, seq: int, m: int) -> frozenset[int]:
    """The reader set { j : bits[j] != mask_for(key, seq)[j] }."""
    diff = bits ^ mask_for(key, seq, m)
    return frozenset(j for j in range(m) if diff & (1 << j))


@dataclass
class PadCipher:
    """A key bound to a reader count, with optional per-seq mask overrides.

    Overrides support the uncompromised-read replay transformation, which
    flips one bit of one pad and re-executes the trace.
    """

    key: PadKey
    m: int
    overrides: dict[int, int] = field(default_factory=dict)

    def mask(self, seq: int) -> int:
        return mask_for(self.key, seq, self.m) ^ self.overrides.get(seq, 0)

    def decode(self, bits: int, seq: int) -> frozenset[int]:
        diff = bits ^ self.mask(seq)
        return frozenset(j for j in range(self.m) if diff & (1 << j))

    def encode(self, readers: frozenset[int] | set[int], seq: int) -> int:
        cipher = self.mask(seq)
        for j in readers:
            cipher ^= insert_mask(j, self.m)
        return cipher

    def flipped(self, seq: int, j: int) -> "PadCipher":
        """A cipher identical to this one except bit ``j`` of pad ``seq``."""
        overrides = dict(self.overrides)
        overrides[seq] = overrides.get(seq, 0) ^ insert_mask(j, self.m)
        return PadCipher(self.key, self.m, overrides)
