"""Attack strategies and their empirical success rates against the analytic bounds.

Each strategy is a plain function that receives only what its attacker may
legitimately see; the harness functions below hold the hidden state and judge
the outcome.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .imaging import Message
from .operating import OperatingPoint, _sub, simulate, simulate_detections
from .parties import (
    DistributionResult,
    RecordBlock,
    SignerState,
    abort_envelope,
    distribute_records,
    encode_detections,
    recipient_decide,
    symmetrize,
)
from .photonics import IDLER_PARTIES, RawDetections
from .security import SecurityParams, forge_bound, repudiation_bound
from .timebase import EncodingParams, common_frames

STRATEGIES = ("forge", "repudiate", "eavesdrop")


@dataclass(frozen=True)
class AttackConfig:
    strategy: str
    trials: int
    target: Message | None = None
    delta: float = 0.0
    chi: float = 0.0

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not 0.0 <= self.delta <= 1.0 or not 0.0 <= self.chi <= 1.0:
            raise ValueError("delta and chi must lie in [0, 1]")
        if self.strategy == "forge":
            if self.target is None:
                raise ValueError("forge needs a target message")
            self.target.require_signable()


def clopper_pearson(k: int, n: int, level: float = 0.95) -> tuple[float, float]:
    alpha = 1.0 - level
    lo = 0.0 if k == 0 else float(stats.beta.ppf(alpha / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - alpha / 2, k + 1, n - k))
    return lo, hi


@dataclass(frozen=True)
class AttackOutcome:
    successes: int
    trials: int
    bound: float
    parameter: float = float("nan")

    @property
    def frequency(self) -> float:
        return self.successes / self.trials

    @property
    def interval(self) -> tuple[float, float]:
        return clopper_pearson(self.successes, self.trials)

    @property
    def within_bound(self) -> bool:
        return self.interval[1] <= self.bound


def outcome_table(outcomes: list[AttackOutcome], parameter_name: str) -> str:
    lines = [f"{parameter_name}\ttrials\tsuccesses\tfrequency\tci_low\tci_high\tbound"]
    for o in outcomes:
        lo, hi = o.interval
        lines.append(
            f"{o.parameter!r}\t{o.trials}\t{o.successes}\t{o.frequency!r}\t{lo!r}\t{hi!r}\t{o.bound!r}"
        )
    return "\n".join(lines) + "\n"


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), 0xA77, int(trial)]))


def _exact_half(n: int, rng) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[rng.permutation(n)[: n // 2 + (int(rng.random() < 0.5) if n % 2 else 0)]] = True
    return mask


# -- forging (Bob) ---------------------------------------------------------------


@dataclass(frozen=True)
class ForgerView:
    """Bob's legitimate knowledge: his own records (including the half he
    forwarded) and the frame numbers of Charlie's kept records, which follow
    from the public Alice-Charlie frame sifting."""

    keep: RecordBlock
    received: RecordBlock
    sent: RecordBlock
    charlie_frames: np.ndarray


def forger_signature(view: ForgerView, guesses: np.ndarray, target: Message, rng) -> np.ndarray:
    """Best-effort forgery: mimic Alice on the records Charlie will image.

    Bob pools X^B_forward (slots known) with Charlie's kept frames (slots
    guessed), keeps a random half as Alice would, and selects the records
    whose slot carries bit 1 in ``target``.
    """
    frames = np.concatenate([view.sent.frames, view.charlie_frames])
    slots = np.concatenate([view.sent.slots, guesses])
    keep = _exact_half(frames.size, rng)
    chosen = target.as_array()[slots[keep]] == 1
    return np.unique(frames[keep][chosen])


def forge_attack(
    dist: DistributionResult,
    target: Message,
    P_e: float,
    trials: int,
    seed: int,
    threshold: float,
    L: float | None = None,
) -> AttackOutcome:
    """Bob tries to get ``target`` accepted by Charlie at ``threshold``.

    Per trial the secret exchange is redrawn and every Y^C_keep slot guess is
    wrong with probability ``P_e`` (wrong guesses uniform over the other slots).
    """
    target.require_signable()
    M = dist.params.slots_per_frame
    L = dist.L if L is None else L
    bound = forge_bound(SecurityParams(0.0, P_e, L, 0.0, threshold))
    successes = 0
    for t in range(trials):
        rng = _trial_rng(seed, t)
        bob, charlie = symmetrize(dist.sifted["X"], dist.sifted["Y"], rng.integers(2**63))
        true = charlie.keep.slots
        wrong = rng.random(true.size) < P_e
        guesses = np.where(wrong, (true + rng.integers(1, M, size=true.size)) % M, true)
        view = ForgerView(bob.keep, bob.received, bob.sent, charlie.keep.frames.copy())
        sig = forger_signature(view, guesses, target, rng)
        decision = recipient_decide(charlie.keep, charlie.received, sig, threshold, target)
        successes += int(decision.accept)
    return AttackOutcome(successes, trials, bound, P_e)


# -- repudiation (Alice) -----------------------------------------------------------


def alice_repudiation_signature(alice: SignerState, message: Message, delta: float, rng) -> np.ndarray:
    """Honest selection with a fraction ``delta`` of the correct frames swapped
    for frames whose slot carries bit 0. Alice only sees her own records."""
    frames = np.concatenate([alice.x.frames, alice.y.frames])
    slots = np.concatenate([alice.x.slots, alice.y.slots])
    keep = _exact_half(frames.size, rng)
    frames, slots = frames[keep], slots[keep]
    bits = message.as_array()[slots]
    good = frames[bits == 1]
    bad = frames[bits == 0]
    n_swap = min(int(round(delta * good.size)), bad.size)
    if n_swap:
        good = np.delete(good, rng.choice(good.size, size=n_swap, replace=False))
        bad = rng.choice(bad, size=n_swap, replace=False)
    else:
        bad = bad[:0]
    return np.unique(np.concatenate([good, bad]))


def repudiation_attack(
    dist: DistributionResult,
    message: Message,
    delta: float,
    trials: int,
    seed: int,
    th_b: float,
    th_c: float,
    L: float | None = None,
) -> AttackOutcome:
    """Success means Bob accepts (``th_b``) and Charlie rejects (``th_c``).

    The secret exchange is redrawn each trial, after Alice has committed to
    her signature, so she cannot aim her mismatches at either recipient.
    """
    message.require_signable()
    L = dist.L if L is None else L
    bound = repudiation_bound(SecurityParams(0.0, 1.0, L, th_b, th_c))
    successes = 0
    for t in range(trials):
        rng = _trial_rng(seed, t)
        sig = alice_repudiation_signature(dist.alice, message, delta, rng)
        bob, charlie = symmetrize(dist.sifted["X"], dist.sifted["Y"], rng.integers(2**63))
        b = recipient_decide(*bob.blocks, sig, th_b, message)
        if not b.accept:
            continue
        c = recipient_decide(*charlie.blocks, sig, th_c, message)
        successes += int(not c.accept)
    return AttackOutcome(successes, trials, bound, delta)


# -- eavesdropping --------------------------------------------------------------------


@dataclass(frozen=True)
class EavesdropOutcome:
    chi: float
    e_hat: dict[str, float]
    sample_size: dict[str, int]
    envelope: dict[str, float]
    expected_inflation: float

    @property
    def detected(self) -> bool:
        return any(self.e_hat[c] > self.envelope[c] for c in self.e_hat)


def eavesdrop_attack(chi: float, op: OperatingPoint, seed: int) -> EavesdropOutcome:
    """Intercept-resend on both idler channels; reports the estimated error and
    whether it leaves the honest envelope ``e_ref + k sigma``."""
    if not 0.0 <= chi <= 1.0:
        raise ValueError("chi must lie in [0, 1]")
    dist = simulate(op.with_eavesdropping(chi), seed)
    M = op.encoding.slots_per_frame
    e_hat = {c: est.e_hat for c, est in dist.estimates.items()}
    n = {c: est.sample_size for c, est in dist.estimates.items()}
    env = {c: abort_envelope(op.e_ref, n[c], op.abort_sigmas) for c in e_hat}
    return EavesdropOutcome(chi, e_hat, n, env, chi * (M - 1) / M)


def eavesdropper_choice(guesses: np.ndarray, targeted: np.ndarray, chi: float, rng) -> np.ndarray:
    """Attack mask: photons whose guessed slot is targeted, each with probability chi."""
    return np.isin(guesses, targeted) & (rng.random(guesses.size) < chi)


def apply_selective_eavesdropping(
    d: RawDetections, params: EncodingParams, targeted, chi: float, P_e: float, seed
) -> RawDetections:
    """Re-randomise the slot of idler photons the eavesdropper believes lie in
    ``targeted``. Her slot guess is wrong with probability ``P_e``."""
    rng = np.random.default_rng(seed)
    targeted = np.asarray(sorted(set(int(s) for s in targeted)), dtype=np.int64)
    M = params.slots_per_frame
    out = d.copy()
    for party in IDLER_PARTIES:
        t = out.times[party]
        true = (t % params.frame_period) // params.slot_width
        wrong = rng.random(t.size) < P_e
        guesses = np.where(wrong, (true + rng.integers(1, M, size=t.size)) % M, true)
        attacked = eavesdropper_choice(guesses, targeted, chi, rng)
        slot = np.where(attacked, rng.integers(0, M, size=t.size), true)
        new_t = (t // params.frame_period) * params.frame_period + slot * params.slot_width + t % params.slot_width
        new_t = np.where(new_t <= out.duration_ps, new_t, t)
        order = np.argsort(new_t, kind="stable")
        out.times[party] = new_t[order]
        out.pair_ids[party] = out.pair_ids[party][order]
    return out


def per_slot_error(dist: DistributionResult) -> tuple[np.ndarray, np.ndarray]:
    """Slot disagreement per Alice slot on both sifted channels: ``(errors, totals)``."""
    M = dist.params.slots_per_frame
    errors = np.zeros(M, dtype=np.int64)
    totals = np.zeros(M, dtype=np.int64)
    for a, r in ((dist.alice.x, dist.sifted["X"]), (dist.alice.y, dist.sifted["Y"])):
        ia, ir = common_frames(a.frames, r.frames)
        sa = a.slots[ia]
        totals += np.bincount(sa, minlength=M)[:M]
        errors += np.bincount(sa[sa != r.slots[ir]], minlength=M)[:M]
    return errors, totals


@dataclass(frozen=True)
class SelectiveReport:
    targeted: tuple[int, ...]
    error_attacked: np.ndarray
    error_baseline: np.ndarray
    events: int

    @property
    def inflation(self) -> np.ndarray:
        return self.error_attacked - self.error_baseline

    @property
    def ratio(self) -> float:
        """Mean inflation on targeted slots over mean inflation elsewhere."""
        mask = np.zeros(self.inflation.size, dtype=bool)
        mask[list(self.targeted)] = True
        if mask.all():
            return 1.0
        num = float(self.inflation[mask].mean())
        den = float(self.inflation[~mask].mean())
        if den <= 0:
            return float("inf") if num > 0 else float("nan")
        return num / den


def selective_attack_probe(targeted, chi: float, op: OperatingPoint, P_e: float, seed: int) -> SelectiveReport:
    """Error inflation per slot when only ``targeted`` slots are attacked.

    Baseline and attacked runs share every random draw except the attack
    itself, so the per-slot difference isolates the attack.
    """
    targeted = tuple(sorted(set(int(s) for s in targeted)))
    if not targeted:
        raise ValueError("targeted slots must be non-empty")
    base_d = simulate_detections(op, seed)
    att_d = apply_selective_eavesdropping(base_d, op.encoding, targeted, chi, P_e, _sub(seed, 9))
    rates = []
    events = 0
    for d in (att_d, base_d):
        dist = distribute_records(encode_detections(d, op.encoding), op.disclose_fraction, _sub(seed, 3))
        err, tot = per_slot_error(dist)
        rates.append(err / np.maximum(tot, 1))
        events = int(tot.sum())
    return SelectiveReport(targeted, rates[0], rates[1], events)
