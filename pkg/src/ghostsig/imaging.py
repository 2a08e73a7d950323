"""Temporal ghost-image retrieval, bit decisions and noise factors."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class UnsignableMessage(ValueError):
    pass


class UndecidableImage(ValueError):
    pass


@dataclass(frozen=True)
class Message:
    """Bit vector carried by the slots of a frame (slot 0 is the first bit)."""

    bits: tuple[int, ...]

    def __post_init__(self):
        if len(self.bits) < 2:
            raise ValueError("a message needs at least two bits")
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"bits must be 0/1, got {self.bits}")

    @classmethod
    def from_string(cls, s: str) -> "Message":
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"message must be a non-empty 0/1 string, got {s!r}")
        return cls(tuple(int(c) for c in s))

    def __str__(self):
        return "".join(map(str, self.bits))

    def __len__(self):
        return len(self.bits)

    @property
    def signable(self) -> bool:
        return 0 < sum(self.bits) < len(self.bits)

    def require_signable(self) -> None:
        # all-1 and all-0 messages are forgeable from the public frame sifting
        if not self.signable:
            raise UnsignableMessage(f"message {self} is all 0 or all 1 and cannot be signed")

    @property
    def ones(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.bits, dtype=np.int8) == 1)

    @property
    def zeros(self) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.bits, dtype=np.int8) == 0)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.bits, dtype=np.int8)


@dataclass(frozen=True)
class GhostImage:
    """Per-slot coincidence counts of one (signature, block) correlation.

    ``block_mean`` is the per-slot mean of the recipient's full block,
    ``|block| / M``, taken before the signer's halving.
    """

    counts: np.ndarray
    block_mean: float

    @property
    def n_slots(self) -> int:
        return int(self.counts.size)

    @property
    def half_mean(self) -> float:
        return self.block_mean / 2.0

    @property
    def sigma(self) -> float:
        return math.sqrt(self.block_mean / 2.0)

    @property
    def bit_boundary(self) -> float:
        """Smallest count decided as bit 1: ``<X>/2 - sigma``."""
        return self.half_mean - self.sigma


@dataclass(frozen=True)
class NoiseReport:
    """Noise factors ``count / (<X>/2)`` on the slots whose bit is 0.

    ``factors`` has one entry per slot; slots with bit 1 hold NaN.
    """

    bits: np.ndarray
    factors: np.ndarray

    @property
    def zero_slots(self) -> np.ndarray:
        return np.flatnonzero(self.bits == 0)

    @property
    def zero_factors(self) -> np.ndarray:
        return self.factors[self.zero_slots]

    @property
    def max_factor(self) -> float:
        z = self.zero_factors
        return float(z.max()) if z.size else 0.0


def retrieve(sig: np.ndarray, block, n_slots: int | None = None) -> GhostImage:
    """Correlate signature frames with a slot-only record block.

    ``block`` is any object with sorted ``frames`` and matching ``slots``
    arrays (a sifted :class:`~ghostsig.parties.RecordBlock`). Frames of the
    signature missing from the block contribute nothing.
    """
    M = n_slots if n_slots is not None else block.n_slots
    frames = np.asarray(block.frames)
    slots = np.asarray(block.slots)
    sig = np.unique(np.asarray(sig, dtype=np.int64))
    if frames.size and sig.size:
        pos = np.searchsorted(frames, sig)
        pos = np.minimum(pos, frames.size - 1)
        pos = pos[frames[pos] == sig]
        counts = np.bincount(slots[pos], minlength=M)[:M]
    else:
        counts = np.zeros(M, dtype=np.int64)
    return GhostImage(counts.astype(np.int64), frames.size / M)


def decide_bits(img: GhostImage) -> Message:
    """Bit 1 where the count is not less than ``<X>/2 - sigma``."""
    if not img.block_mean > 0:
        raise UndecidableImage("block mean is zero; bits cannot be decided")
    bits = np.asarray(img.counts, dtype=float) >= img.bit_boundary
    return Message(tuple(int(b) for b in bits))


def noise_factors(img: GhostImage, decided: Message) -> NoiseReport:
    if not img.block_mean > 0:
        raise UndecidableImage("block mean is zero; noise factors are undefined")
    bits = decided.as_array()
    if bits.size != img.n_slots:
        raise ValueError(f"message has {bits.size} bits but image has {img.n_slots} slots")
    f = np.asarray(img.counts, dtype=float) / img.half_mean
    return NoiseReport(bits, np.where(bits == 0, f, np.nan))


def image_table(img: GhostImage, report: NoiseReport | None = None) -> str:
    """Columnar text: slot, count, decided bit and noise factor per slot."""
    decided = decide_bits(img) if img.block_mean > 0 else None
    lines = [
        f"# block_mean={img.block_mean!r} sigma={img.sigma!r} boundary={img.bit_boundary!r}",
        "slot\tcount\tdecided_bit\tnoise_factor",
    ]
    for i, c in enumerate(img.counts):
        bit = "" if decided is None else str(decided.bits[i])
        f = ""
        if report is not None and report.bits[i] == 0:
            f = repr(float(report.factors[i]))
        lines.append(f"{i}\t{int(c)}\t{bit}\t{f}")
    return "\n".join(lines) + "\n"
