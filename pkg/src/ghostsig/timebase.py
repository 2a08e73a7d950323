"""Three-layer temporal encoding: frame / slot / bin.

A frame of period ``T`` holds ``slots_per_frame`` slots and each slot holds
``bins_per_slot`` bins of ``bin_width`` picoseconds. Times are integer
picoseconds; a time that falls exactly on an edge belongs to the later cell.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EncodingParams:
    bin_width: int = 20
    bins_per_slot: int = 15
    slots_per_frame: int = 10

    def __post_init__(self):
        if int(self.bin_width) != self.bin_width or self.bin_width <= 0:
            raise ValueError(f"bin_width must be a positive integer (ps), got {self.bin_width}")
        if int(self.bins_per_slot) != self.bins_per_slot or self.bins_per_slot < 1:
            raise ValueError(f"bins_per_slot must be >= 1, got {self.bins_per_slot}")
        if int(self.slots_per_frame) != self.slots_per_frame or self.slots_per_frame < 2:
            raise ValueError(f"slots_per_frame must be >= 2, got {self.slots_per_frame}")

    @property
    def slot_width(self) -> int:
        return self.bin_width * self.bins_per_slot

    @property
    def frame_period(self) -> int:
        """Frame period T in picoseconds."""
        return self.slot_width * self.slots_per_frame

    @property
    def M(self) -> int:
        return self.slots_per_frame


@dataclass(frozen=True, order=True)
class PhotonRecord:
    frame: int
    slot: int
    bin: int

    def check(self, params: EncodingParams) -> None:
        if self.frame < 0:
            raise ValueError(f"negative frame {self.frame}")
        if not 0 <= self.slot < params.slots_per_frame:
            raise ValueError(f"slot {self.slot} out of range [0, {params.slots_per_frame})")
        if not 0 <= self.bin < params.bins_per_slot:
            raise ValueError(f"bin {self.bin} out of range [0, {params.bins_per_slot})")


def encode_time(t: int, params: EncodingParams) -> PhotonRecord:
    """Map an absolute detection time (ps) to its (frame, slot, bin) record."""
    t = int(t)
    if t < 0:
        raise ValueError(f"detection time must be non-negative, got {t}")
    frame, rem = divmod(t, params.frame_period)
    slot, rem = divmod(rem, params.slot_width)
    return PhotonRecord(frame, slot, rem // params.bin_width)


def decode_record(r: PhotonRecord, params: EncodingParams) -> int:
    """Left edge (ps) of the bin addressed by ``r``."""
    r.check(params)
    return r.frame * params.frame_period + r.slot * params.slot_width + r.bin * params.bin_width


def encode_times(times: np.ndarray, params: EncodingParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`encode_time` returning ``(frames, slots, bins)`` int64 arrays."""
    times = np.asarray(times, dtype=np.int64)
    if times.size and times.min() < 0:
        raise ValueError("detection times must be non-negative")
    frames, rem = np.divmod(times, params.frame_period)
    slots, rem = np.divmod(rem, params.slot_width)
    return frames, slots, rem // params.bin_width


def decode_records(frames, slots, bins, params: EncodingParams) -> np.ndarray:
    frames = np.asarray(frames, dtype=np.int64)
    slots = np.asarray(slots, dtype=np.int64)
    bins = np.asarray(bins, dtype=np.int64)
    if slots.size and (slots.min() < 0 or slots.max() >= params.slots_per_frame):
        raise ValueError("slot index out of range")
    if bins.size and (bins.min() < 0 or bins.max() >= params.bins_per_slot):
        raise ValueError("bin index out of range")
    return frames * params.frame_period + slots * params.slot_width + bins * params.bin_width


def single_occupancy(frames: np.ndarray) -> np.ndarray:
    """Boolean mask keeping records whose frame holds exactly one detection.

    ``frames`` must be sorted ascending (as produced by encoding sorted times).
    """
    frames = np.asarray(frames)
    n = frames.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    same_prev = np.zeros(n, dtype=bool)
    same_prev[1:] = frames[1:] == frames[:-1]
    same_next = np.zeros(n, dtype=bool)
    same_next[:-1] = same_prev[1:]
    return ~(same_prev | same_next)


def common_frames(frames_a: np.ndarray, frames_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Indices into two sorted, duplicate-free frame arrays where the frames agree."""
    frames_a = np.asarray(frames_a)
    frames_b = np.asarray(frames_b)
    if frames_a.size == 0 or frames_b.size == 0:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    pos = np.searchsorted(frames_b, frames_a)
    pos_clipped = np.minimum(pos, frames_b.size - 1)
    hit = frames_b[pos_clipped] == frames_a
    return np.flatnonzero(hit), pos_clipped[hit]
