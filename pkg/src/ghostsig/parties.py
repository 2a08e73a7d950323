"""Alice (signer), Bob and Charlie (recipients) and the two protocol stages.

Distribution stage, per quantum channel X (Alice-Bob) and Y (Alice-Charlie):

1. encode detections and drop frames holding more than one detection;
2. agree on coincident frames, disclose a random sample of full records to
   estimate the slot-error rate (those frames are consumed);
3. announce bins of the remaining coincident frames, keep matching ones;
4. Bob and Charlie swap a secret random half of their sifted records.

Messaging stage: Alice halves her records, selects those whose slot carries
bit 1 and publishes their frame numbers. Each recipient correlates those
frames with his two blocks and compares the noise factors to a threshold.

Every classical message goes through a :class:`Channel` that logs a
transcript entry. Slot values cross an authenticated channel only in the
error-estimation disclosure.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .imaging import (
    GhostImage,
    Message,
    NoiseReport,
    UnsignableMessage,
    decide_bits,
    noise_factors,
    retrieve,
)
from .photonics import PARTIES, RawDetections
from .timebase import EncodingParams, common_frames, encode_times, single_occupancy

__all__ = [
    "Message",
    "UnsignableMessage",
    "RecordBlock",
    "EncodedRecords",
    "Channel",
    "Transcript",
    "ChannelEstimate",
    "SignerState",
    "RecipientState",
    "DistributionResult",
    "Decision",
    "DistributionFailure",
    "EstimationFailure",
    "SigningError",
    "encode_detections",
    "run_distribution",
    "distribute_records",
    "estimate_channel",
    "symmetrize",
    "sign",
    "recipient_decide",
    "abort_envelope",
]

CHANNEL_OF = {"bob": "X", "charlie": "Y"}
PRESENCE_FLOOR = 0.5


class DistributionFailure(RuntimeError):
    """A sifted block came out empty."""


class EstimationFailure(ValueError):
    pass


class SigningError(ValueError):
    pass


# -- records -----------------------------------------------------------------


@dataclass
class RecordBlock:
    """At most one record per frame, frames sorted ascending.

    ``bins`` is ``None`` once the block has been bin-sifted (slot-only records).
    """

    frames: np.ndarray
    slots: np.ndarray
    channel: str
    n_slots: int
    bins: np.ndarray | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64)
        self.slots = np.asarray(self.slots, dtype=np.int64)
        if self.frames.shape != self.slots.shape:
            raise ValueError("frames and slots differ in length")
        if self.frames.size > 1 and np.any(np.diff(self.frames) <= 0):
            raise ValueError("frames must be strictly increasing (one record per frame)")

    def __len__(self):
        return int(self.frames.size)

    @property
    def per_slot_mean(self) -> float:
        return len(self) / self.n_slots

    def take(self, idx) -> "RecordBlock":
        bins = None if self.bins is None else self.bins[idx]
        return RecordBlock(self.frames[idx], self.slots[idx], self.channel, self.n_slots, bins)

    def slot_histogram(self) -> np.ndarray:
        return np.bincount(self.slots, minlength=self.n_slots)[: self.n_slots]

    @classmethod
    def from_mapping(cls, mapping: dict, channel: str, n_slots: int) -> "RecordBlock":
        """Build from ``{frame: slot}`` or ``{frame: (slot, bin)}``."""
        frames = sorted(mapping)
        vals = [mapping[f] for f in frames]
        if vals and isinstance(vals[0], tuple):
            slots = [v[0] for v in vals]
            bins = np.asarray([v[1] for v in vals], dtype=np.int64)
        else:
            slots, bins = vals, None
        return cls(np.asarray(frames, dtype=np.int64), np.asarray(slots, dtype=np.int64), channel, n_slots, bins)


@dataclass
class EncodedRecords:
    """Per-party (frame, slot, bin) arrays; the replayable input of the protocol."""

    params: EncodingParams
    frames: dict[str, np.ndarray]
    slots: dict[str, np.ndarray]
    bins: dict[str, np.ndarray]

    def count(self, party: str) -> int:
        return int(self.frames[party].size)


def encode_detections(d: RawDetections, params: EncodingParams) -> EncodedRecords:
    frames, slots, bins = {}, {}, {}
    for p in PARTIES:
        frames[p], slots[p], bins[p] = encode_times(d.times[p], params)
    return EncodedRecords(params, frames, slots, bins)


# -- classical channels ---------------------------------------------------------


def _digest(payload: dict) -> str:
    h = hashlib.sha256()
    for key in sorted(payload):
        h.update(key.encode())
        v = payload[key]
        if isinstance(v, np.ndarray):
            h.update(str(v.dtype).encode())
            h.update(np.ascontiguousarray(v).tobytes())
        else:
            h.update(json.dumps(v, sort_keys=True, default=str).encode())
    return h.hexdigest()[:16]


@dataclass(frozen=True)
class TranscriptEntry:
    seq: int
    channel: str
    kind: str
    sender: str
    receiver: str
    step: str
    tag: str
    fields: tuple[str, ...]
    size: int
    digest: str

    def as_dict(self) -> dict:
        return {
            "seq": self.seq,
            "channel": self.channel,
            "kind": self.kind,
            "from": self.sender,
            "to": self.receiver,
            "step": self.step,
            "tag": self.tag,
            "fields": list(self.fields),
            "size": self.size,
            "digest": self.digest,
        }


@dataclass
class Transcript:
    entries: list[TranscriptEntry] = field(default_factory=list)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.as_dict(), sort_keys=True) + "\n" for e in self.entries)

    def visible_to(self, party: str) -> list[TranscriptEntry]:
        """Entries a party can observe: its own traffic plus authenticated (public) channels."""
        return [
            e for e in self.entries
            if e.kind == "authenticated" or party in (e.sender, e.receiver)
        ]


class Channel:
    """Point-to-point classical channel that logs every message it carries.

    ``kind`` is ``"authenticated"`` (integrity only, contents public) or
    ``"secure"`` (contents hidden from third parties).
    """

    def __init__(self, name: str, kind: str, ends: tuple[str, str], transcript: Transcript):
        self.name = name
        self.kind = kind
        self.ends = ends
        self.transcript = transcript

    def send(self, sender: str, receiver: str, step: str, tag: str, **payload):
        if {sender, receiver} != set(self.ends):
            raise ValueError(f"{sender}->{receiver} is not carried by channel {self.name}")
        size = 0
        for v in payload.values():
            size += int(v.size) if isinstance(v, np.ndarray) else 1
        self.transcript.entries.append(
            TranscriptEntry(
                len(self.transcript.entries), self.name, self.kind, sender, receiver,
                step, tag, tuple(sorted(payload)), size, _digest(payload),
            )
        )
        return payload


def _make_channels(transcript: Transcript) -> dict[str, Channel]:
    return {
        "AB": Channel("AB", "authenticated", ("alice", "bob"), transcript),
        "AC": Channel("AC", "authenticated", ("alice", "charlie"), transcript),
    }


# -- party state -----------------------------------------------------------------


@dataclass
class ChannelEstimate:
    channel: str
    e_hat: float
    sample_size: int
    chi_bound: float

    @property
    def p_e(self) -> float:
        return 1.0 - self.chi_bound


@dataclass
class SignerState:
    """S^A = (X^A, Y^A)."""

    x: RecordBlock
    y: RecordBlock

    def __len__(self):
        return len(self.x) + len(self.y)


@dataclass
class RecipientState:
    """A recipient's holdings after symmetrization.

    For Bob: ``keep`` = X^B_keep, ``received`` = Y^C_forward, ``sent`` = X^B_forward.
    For Charlie: ``keep`` = Y^C_keep, ``received`` = X^B_forward, ``sent`` = Y^C_forward.
    """

    name: str
    keep: RecordBlock
    received: RecordBlock
    sent: RecordBlock

    @property
    def blocks(self) -> tuple[RecordBlock, RecordBlock]:
        """The two blocks used for ghost imaging, own channel first."""
        return self.keep, self.received


@dataclass
class DistributionResult:
    params: EncodingParams
    alice: SignerState
    bob: RecipientState
    charlie: RecipientState
    estimates: dict[str, ChannelEstimate]
    transcript: Transcript
    # pre-symmetrization recipient blocks; harness diagnostics, not party-visible
    sifted: dict[str, RecordBlock]

    @property
    def L(self) -> float:
        """Expected ghost-image count ``<X^B_keep>/2 + <Y^C_forward>/2``."""
        return self.bob.keep.per_slot_mean / 2 + self.bob.received.per_slot_mean / 2

    def state_of(self, name: str) -> RecipientState:
        return {"bob": self.bob, "charlie": self.charlie}[name]


class _Holder:
    """One party's private single-occupancy records."""

    def __init__(self, name: str, rec: EncodedRecords):
        f, s, b = rec.frames[name], rec.slots[name], rec.bins[name]
        m = single_occupancy(f)
        self.name = name
        self.frames, self.slots, self.bins = f[m], s[m], b[m]


def _rng(seed, *path) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *path]))


# -- distribution stage ---------------------------------------------------------------


def estimate_channel(disclosed_A, disclosed_B) -> tuple[float, int]:
    """Slot-error estimate from two disclosed ``(frame, slot)`` lists.

    Only frames present in both lists are compared.
    """
    a = np.asarray(disclosed_A, dtype=np.int64).reshape(-1, 2)
    b = np.asarray(disclosed_B, dtype=np.int64).reshape(-1, 2)
    a = a[np.argsort(a[:, 0], kind="stable")]
    b = b[np.argsort(b[:, 0], kind="stable")]
    ia, ib = common_frames(a[:, 0], b[:, 0])
    n = int(ia.size)
    if n == 0:
        raise EstimationFailure("no common frames in the disclosed samples")
    return int(np.count_nonzero(a[ia, 1] != b[ib, 1])) / n, n


def abort_envelope(e_ref: float, n: int, k_sigma: float = 5.0) -> float:
    """Largest tolerated ``e_hat`` for a sample of ``n``: ``e_ref + k sigma``."""
    if n <= 0:
        return e_ref
    return e_ref + k_sigma * math.sqrt(e_ref * (1.0 - e_ref) / n)


def _sift_channel(alice: _Holder, other: _Holder, channel: Channel, chan: str,
                  disclose_fraction: float, rng, M: int):
    name = other.name
    # frame numbers are public; slots stay private
    channel.send(name, "alice", "3", "frames", frames=other.frames)
    ia, ib = common_frames(alice.frames, other.frames)
    n_common = ia.size

    # step 3: disclose full records of a random sample of coincident frames
    n_disc = int(round(disclose_fraction * n_common))
    pick = np.zeros(n_common, dtype=bool)
    pick[rng.choice(n_common, size=n_disc, replace=False)] = True
    da, db = ia[pick], ib[pick]
    channel.send("alice", name, "3", "disclose", frames=alice.frames[da],
                 slots=alice.slots[da], bins=alice.bins[da])
    channel.send(name, "alice", "3", "disclose", frames=other.frames[db],
                 slots=other.slots[db], bins=other.bins[db])
    same_bin = alice.bins[da] == other.bins[db]
    sample_a = np.column_stack([alice.frames[da][same_bin], alice.slots[da][same_bin]])
    sample_b = np.column_stack([other.frames[db][same_bin], other.slots[db][same_bin]])

    # step 4: frame and bin sifting of what is left
    ra, rb = ia[~pick], ib[~pick]
    channel.send("alice", name, "4", "bins", frames=alice.frames[ra], bins=alice.bins[ra])
    channel.send(name, "alice", "4", "bins", frames=other.frames[rb], bins=other.bins[rb])
    keep = alice.bins[ra] == other.bins[rb]
    ka, kb = ra[keep], rb[keep]
    block_a = RecordBlock(alice.frames[ka], alice.slots[ka], chan, M)
    block_b = RecordBlock(other.frames[kb], other.slots[kb], chan, M)
    return block_a, block_b, sample_a, sample_b


def symmetrize(bob_block: RecordBlock, charlie_block: RecordBlock, seed,
               transcript: Transcript | None = None) -> tuple[RecipientState, RecipientState]:
    """Secret exchange of a random half of each recipient's sifted block.

    Each block is split by a uniform random partition whose halves differ in
    size by at most one. The partition travels only over the secure channel.
    """
    rng = _rng(seed, 99)
    halves = []
    for block in (bob_block, charlie_block):
        n = len(block)
        n_keep = n // 2 + (int(rng.random() < 0.5) if n % 2 else 0)
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:n_keep]] = True
        halves.append((block.take(mask), block.take(~mask)))
    (xb_keep, xb_fwd), (yc_keep, yc_fwd) = halves
    if transcript is not None:
        bc = Channel("BC", "secure", ("bob", "charlie"), transcript)
        bc.send("bob", "charlie", "5", "forward", frames=xb_fwd.frames, slots=xb_fwd.slots)
        bc.send("charlie", "bob", "5", "forward", frames=yc_fwd.frames, slots=yc_fwd.slots)
    bob = RecipientState("bob", keep=xb_keep, received=yc_fwd, sent=xb_fwd)
    charlie = RecipientState("charlie", keep=yc_keep, received=xb_fwd, sent=yc_fwd)
    return bob, charlie


def distribute_records(
    records: EncodedRecords,
    disclose_fraction: float = 0.1,
    seed: int = 0,
    chi_bounds: dict[str, float] | None = None,
) -> DistributionResult:
    """Run distribution steps (3)-(5) on already encoded records."""
    if not 0.0 < disclose_fraction < 1.0:
        raise ValueError(f"disclose_fraction must lie in (0, 1), got {disclose_fraction}")
    chi_bounds = {"X": 0.0, "Y": 0.0, **(chi_bounds or {})}
    params = records.params
    M = params.slots_per_frame
    transcript = Transcript()
    channels = _make_channels(transcript)
    alice = _Holder("alice", records)

    blocks, estimates = {}, {}
    for k, (name, link) in enumerate((("bob", "AB"), ("charlie", "AC"))):
        chan = CHANNEL_OF[name]
        other = _Holder(name, records)
        block_a, block_r, sample_a, sample_r = _sift_channel(
            alice, other, channels[link], chan, disclose_fraction, _rng(seed, 1, k), M
        )
        if len(block_a) == 0:
            raise DistributionFailure(f"channel {chan}: no records survive sifting")
        try:
            e_hat, n = estimate_channel(sample_a, sample_r)
        except EstimationFailure:
            e_hat, n = float("nan"), 0
        estimates[chan] = ChannelEstimate(chan, e_hat, n, float(chi_bounds[chan]))
        blocks[chan] = (block_a, block_r)

    bob, charlie = symmetrize(blocks["X"][1], blocks["Y"][1], _rng(seed, 2).integers(2**63), transcript)
    return DistributionResult(
        params=params,
        alice=SignerState(blocks["X"][0], blocks["Y"][0]),
        bob=bob,
        charlie=charlie,
        estimates=estimates,
        transcript=transcript,
        sifted={"X": blocks["X"][1], "Y": blocks["Y"][1]},
    )


def run_distribution(
    detections: RawDetections,
    params: EncodingParams,
    disclose_fraction: float = 0.1,
    seed: int = 0,
    chi_bounds: dict[str, float] | None = None,
) -> DistributionResult:
    """Full distribution stage starting from raw detection times."""
    return distribute_records(encode_detections(detections, params), disclose_fraction, seed, chi_bounds)


# -- messaging stage -----------------------------------------------------------------


def _halve(n: int, rng) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: n // 2 + (int(rng.random() < 0.5) if n % 2 else 0)]] = True
    return mask


def sign(message: Message, alice_state: SignerState, seed, halve: bool = True) -> np.ndarray:
    """Signature elements: sorted frame numbers of Alice's selected records.

    Alice first keeps an exact random half of S^A (``halve=False`` skips this,
    for tests), then selects records whose slot carries bit 1.
    """
    message.require_signable()
    frames = np.concatenate([alice_state.x.frames, alice_state.y.frames])
    slots = np.concatenate([alice_state.x.slots, alice_state.y.slots])
    if frames.size == 0:
        raise SigningError("Alice holds no records")
    if len(message) != alice_state.x.n_slots:
        raise ValueError(f"message has {len(message)} bits, frames carry {alice_state.x.n_slots} slots")
    if halve:
        keep = _halve(frames.size, _rng(seed, 6))
        frames, slots = frames[keep], slots[keep]
    chosen = message.as_array()[slots] == 1
    sig = np.unique(frames[chosen])
    if sig.size == 0:
        raise SigningError("no records selected for this message")
    return sig


@dataclass
class Decision:
    accept: bool
    images: tuple[GhostImage, GhostImage]
    reports: tuple[NoiseReport, NoiseReport]
    decided: tuple[Message | None, Message | None]
    reason: str

    @property
    def max_factor(self) -> float:
        return max(r.max_factor for r in self.reports)


def recipient_decide(
    block_1: RecordBlock,
    block_2: RecordBlock,
    sig: np.ndarray,
    threshold: float,
    message: Message,
    presence_floor: float = PRESENCE_FLOOR,
) -> Decision:
    """Accept iff, in both images, every 0-slot of ``message`` has noise factor
    strictly below ``threshold`` and every 1-slot reaches ``presence_floor``
    (in units of ``<X>/2``).

    The boundary-rule bit decisions (``decide_bits``) are reported alongside
    but do not gate acceptance.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    sig = np.asarray(sig, dtype=np.int64)
    images = (retrieve(sig, block_1), retrieve(sig, block_2))
    if any(img.block_mean == 0 for img in images):
        empty = NoiseReport(message.as_array(), np.full(len(message), np.nan))
        return Decision(False, images, (empty, empty), (None, None), "empty block")
    reports = tuple(noise_factors(img, message) for img in images)
    decided = tuple(decide_bits(img) for img in images)
    if sig.size == 0:
        return Decision(False, images, reports, decided, "empty signature")
    for k, img in enumerate(images):
        if img.counts.sum() == 0:
            return Decision(False, images, reports, decided, f"image {k}: signature misses the block")
    ones = message.ones
    for k, (img, rep) in enumerate(zip(images, reports)):
        if rep.max_factor >= threshold:
            return Decision(False, images, reports, decided,
                            f"image {k}: noise factor {rep.max_factor:.4f} >= {threshold}")
        presence = img.counts[ones] / img.half_mean
        if presence.size and presence.min() < presence_floor:
            return Decision(False, images, reports, decided,
                            f"image {k}: 1-slot level {presence.min():.3f} < {presence_floor}")
    return Decision(True, images, reports, decided, "accept")
