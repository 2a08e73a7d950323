"""Monte Carlo photon-pair source with three detectors.

Alice keeps the signal photon of each pair; the idler goes to Bob or Charlie
with probability 1/2. Detections carry Gaussian timing jitter and each
detector adds Poisson dark counts. Emission is a homogeneous Poisson process
in continuous time, quantised to whole picoseconds after jitter.

Only pairs with at least one detected photon are materialised. Thinning a
Poisson process gives independent Poisson processes, so this is the same
distribution as generating every emission and discarding undetected ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .timebase import EncodingParams, common_frames, encode_times, single_occupancy

PS_PER_S = 10**12
PARTIES = ("alice", "bob", "charlie")
IDLER_PARTIES = ("bob", "charlie")


class CalibrationError(ValueError):
    """Target error rate cannot be reached with the available knobs."""


@dataclass(frozen=True)
class SourceParams:
    pair_rate: float
    duration: float
    alice_efficiency: float
    idler_efficiency: float
    jitter_sigma: float
    dark_count_rate: float
    seed: int

    def __post_init__(self):
        if self.pair_rate < 0 or self.dark_count_rate < 0 or self.jitter_sigma < 0:
            raise ValueError("rates and jitter must be non-negative")
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration}")
        for name in ("alice_efficiency", "idler_efficiency"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def duration_ps(self) -> int:
        return int(round(self.duration * PS_PER_S))


@dataclass(frozen=True)
class ChannelPerturbation:
    """Slot perturbations applied to idler detections of one or both channels.

    ``eavesdrop_fraction`` is the attacked fraction chi; an attacked photon's
    slot is redrawn uniformly over all slots of its frame. ``intrinsic_slot_error``
    moves a photon to a uniformly chosen *different* slot.
    """

    eavesdrop_fraction: float = 0.0
    intrinsic_slot_error: float = 0.0

    def __post_init__(self):
        for name in ("eavesdrop_fraction", "intrinsic_slot_error"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class RawDetections:
    """Sorted absolute detection times (ps) per party.

    ``pair_ids`` hold the ground-truth pair index of each detection (-1 for a
    dark count). They exist for diagnostics only and are never handed to the
    protocol parties.
    """

    times: dict[str, np.ndarray]
    duration_ps: int
    pair_ids: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        for p in PARTIES:
            t = np.asarray(self.times.get(p, np.zeros(0, dtype=np.int64)), dtype=np.int64)
            self.times[p] = t
            if p not in self.pair_ids:
                self.pair_ids[p] = np.full(t.size, -1, dtype=np.int64)
            if t.size and (t[0] < 0 or t[-1] > self.duration_ps or np.any(np.diff(t) < 0)):
                raise ValueError(f"{p}: detection times must be sorted within [0, duration]")

    def count(self, party: str) -> int:
        return int(self.times[party].size)

    def copy(self) -> "RawDetections":
        return RawDetections(
            {p: t.copy() for p, t in self.times.items()},
            self.duration_ps,
            {p: ids.copy() for p, ids in self.pair_ids.items()},
        )


def _sorted_uniform(rng: np.random.Generator, n: int, upper: float) -> np.ndarray:
    # order statistics of n uniforms from normalised exponential spacings, O(n)
    gaps = rng.standard_exponential(n + 1)
    cs = np.cumsum(gaps)
    return cs[:-1] * (upper / cs[-1])


def _detect(rng, emit_ps, ids, jitter_sigma, duration_ps):
    t = emit_ps
    if jitter_sigma > 0:
        t = t + rng.normal(0.0, jitter_sigma, size=t.size)
    t = np.rint(t).astype(np.int64)
    keep = (t >= 0) & (t <= duration_ps)
    return t[keep], ids[keep]


def _merge(parts):
    times = np.concatenate([p[0] for p in parts])
    ids = np.concatenate([p[1] for p in parts])
    order = np.argsort(times, kind="stable")
    return times[order], ids[order]


def generate_pairs(params: SourceParams) -> RawDetections:
    """Simulate one seeded acquisition run of the shared pair source."""
    rng = np.random.default_rng(params.seed)
    D = params.duration
    dur_ps = params.duration_ps
    eta_a, eta_i = params.alice_efficiency, params.idler_efficiency
    p_any = 1.0 - (1.0 - eta_a) * (1.0 - eta_i)

    n = int(rng.poisson(params.pair_rate * D * p_any)) if p_any > 0 else 0
    emit = _sorted_uniform(rng, n, float(dur_ps))
    ids = np.arange(n, dtype=np.int64)

    # category of each materialised pair: 0 both detected, 1 Alice only, 2 idler only
    probs = np.array([eta_a * eta_i, eta_a * (1 - eta_i), (1 - eta_a) * eta_i])
    if n:
        cat = rng.choice(3, size=n, p=probs / probs.sum())
    else:
        cat = np.zeros(0, dtype=np.int64)
    to_bob = rng.random(n) < 0.5

    alice_sel = cat <= 1
    idler_sel = cat != 1
    parts = {p: [] for p in PARTIES}
    parts["alice"].append(_detect(rng, emit[alice_sel], ids[alice_sel], params.jitter_sigma, dur_ps))
    for party, route in (("bob", to_bob), ("charlie", ~to_bob)):
        sel = idler_sel & route
        parts[party].append(_detect(rng, emit[sel], ids[sel], params.jitter_sigma, dur_ps))

    for party in PARTIES:
        n_dark = int(rng.poisson(params.dark_count_rate * D))
        dark = rng.integers(0, dur_ps + 1, size=n_dark, dtype=np.int64)
        parts[party].append((dark, np.full(n_dark, -1, dtype=np.int64)))

    times, pair_ids = {}, {}
    for party in PARTIES:
        times[party], pair_ids[party] = _merge(parts[party])
    return RawDetections(times, dur_ps, pair_ids)


def _reslot(t, params: EncodingParams, new_slot):
    frame_start = (t // params.frame_period) * params.frame_period
    offset = t % params.slot_width
    return frame_start + new_slot * params.slot_width + offset


def apply_eavesdropping(
    d: RawDetections,
    p: ChannelPerturbation,
    params: EncodingParams,
    seed,
    parties=IDLER_PARTIES,
) -> RawDetections:
    """Perturb idler slots; frame and position inside the slot are preserved.

    The eavesdropper acts on the channel first (uniform re-draw with
    probability chi), then the receiver's intrinsic error moves the photon to
    a different slot with probability ``intrinsic_slot_error``.
    """
    if p.eavesdrop_fraction == 0 and p.intrinsic_slot_error == 0:
        return d
    rng = np.random.default_rng(seed)
    M = params.slots_per_frame
    out = d.copy()
    for party in parties:
        t = out.times[party]
        slot = (t % params.frame_period) // params.slot_width
        attacked = rng.random(t.size) < p.eavesdrop_fraction
        slot = np.where(attacked, rng.integers(0, M, size=t.size), slot)
        moved = rng.random(t.size) < p.intrinsic_slot_error
        shift = rng.integers(1, M, size=t.size)
        slot = np.where(moved, (slot + shift) % M, slot)
        new_t = _reslot(t, params, slot)
        # a re-slotted photon in the final partial frame could leave the window
        new_t = np.where(new_t <= out.duration_ps, new_t, t)
        order = np.argsort(new_t, kind="stable")
        out.times[party] = new_t[order]
        out.pair_ids[party] = out.pair_ids[party][order]
    return out


def linked_slot_disagreement(
    d: RawDetections, params: EncodingParams, party: str, same_bin: bool = True
) -> tuple[int, int]:
    """Ground-truth slot disagreements between Alice and ``party``.

    Compares detections of the same pair that fall in the same frame (and, by
    default, the same bin). Returns ``(disagreements, compared)``.
    """
    ia = d.pair_ids["alice"]
    ib = d.pair_ids[party]
    _, pos_a, pos_b = np.intersect1d(ia, ib, assume_unique=False, return_indices=True)
    keep = ia[pos_a] >= 0
    pos_a, pos_b = pos_a[keep], pos_b[keep]
    fa, sa, ba = encode_times(d.times["alice"][pos_a], params)
    fb, sb, bb = encode_times(d.times[party][pos_b], params)
    ok = fa == fb
    if same_bin:
        ok &= ba == bb
    return int(np.count_nonzero(sa[ok] != sb[ok])), int(np.count_nonzero(ok))


def sifted_slot_error(d: RawDetections, params: EncodingParams) -> tuple[int, int]:
    """End-to-end slot disagreements after multi-photon discard and frame/bin sifting.

    Pools channels X (Alice-Bob) and Y (Alice-Charlie). This is what the
    parties themselves would observe, accidental coincidences included.
    """
    enc = {}
    for party in PARTIES:
        f, s, b = encode_times(d.times[party], params)
        m = single_occupancy(f)
        enc[party] = (f[m], s[m], b[m])
    errors = compared = 0
    fa, sa, ba = enc["alice"]
    for party in IDLER_PARTIES:
        fb, sb, bb = enc[party]
        ia, ib = common_frames(fa, fb)
        same_bin = ba[ia] == bb[ib]
        errors += int(np.count_nonzero(sa[ia][same_bin] != sb[ib][same_bin]))
        compared += int(np.count_nonzero(same_bin))
    return errors, compared


def calibrate_error(
    target_e: float,
    base: SourceParams,
    params: EncodingParams,
    knob: str = "intrinsic",
) -> ChannelPerturbation:
    """Choose a perturbation so the sifted slot-error rate hits ``target_e``.

    A pilot run of ``base`` measures the unperturbed error ``e0`` from jitter
    and accidental coincidences. Base errors are treated as uniform over the
    wrong slots, which makes the composition exact:

    * intrinsic knob: ``e = e0 + i * (1 - e0 * M / (M - 1))``
    * eavesdrop knob: ``e = e0 + chi * ((M - 1) / M - e0)``
    """
    M = params.slots_per_frame
    if not 0.0 <= target_e < (M - 1) / M:
        raise CalibrationError(f"target error {target_e} outside [0, {(M - 1) / M:.4f})")
    if knob not in ("intrinsic", "eavesdrop"):
        raise ValueError(f"unknown knob {knob!r}")
    errors, compared = sifted_slot_error(generate_pairs(base), params)
    e0 = errors / compared if compared else 0.0
    if target_e < e0:
        raise CalibrationError(
            f"target error {target_e:.4f} is below the unperturbed error {e0:.4f} "
            "set by jitter and accidentals"
        )
    if target_e == e0:
        return ChannelPerturbation(0.0, 0.0)
    if knob == "intrinsic":
        value = (target_e - e0) / (1.0 - e0 * M / (M - 1))
        if value > 1.0:
            raise CalibrationError(f"target error {target_e} needs intrinsic error {value:.3f} > 1")
        return ChannelPerturbation(0.0, value)
    value = (target_e - e0) / ((M - 1) / M - e0)
    return ChannelPerturbation(value, 0.0)


def with_seed(params: SourceParams, seed: int) -> SourceParams:
    return replace(params, seed=seed)
