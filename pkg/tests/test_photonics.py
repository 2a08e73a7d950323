import numpy as np
import pytest

from ghostsig.photonics import (
    CalibrationError,
    ChannelPerturbation,
    RawDetections,
    SourceParams,
    apply_eavesdropping,
    calibrate_error,
    generate_pairs,
    linked_slot_disagreement,
    sifted_slot_error,
)
from ghostsig.timebase import EncodingParams, encode_times

P = EncodingParams()


def source(**kw):
    base = dict(pair_rate=2e5, duration=0.2, alice_efficiency=1.0, idler_efficiency=1.0,
                jitter_sigma=0.0, dark_count_rate=0.0, seed=3)
    base.update(kw)
    return SourceParams(**base)


def test_seeded_generation_is_reproducible():
    a = generate_pairs(source())
    b = generate_pairs(source())
    for p in ("alice", "bob", "charlie"):
        assert np.array_equal(a.times[p], b.times[p])
    c = generate_pairs(source(seed=4))
    assert not np.array_equal(a.times["alice"], c.times["alice"])


def test_times_sorted_and_in_window():
    d = generate_pairs(source(jitter_sigma=50.0, dark_count_rate=1e4))
    for t in d.times.values():
        assert np.all(np.diff(t) >= 0)
        assert t.min() >= 0 and t.max() <= d.duration_ps


def test_rates_match_poisson_expectation():
    s = source(pair_rate=1e6, duration=0.5, alice_efficiency=0.5, idler_efficiency=0.2)
    d = generate_pairs(s)
    n = s.pair_rate * s.duration
    assert abs(d.count("alice") - 0.5 * n) < 5 * np.sqrt(0.5 * n)
    idler = d.count("bob") + d.count("charlie")
    assert abs(idler - 0.2 * n) < 5 * np.sqrt(0.2 * n)
    # routing is balanced
    assert abs(d.count("bob") - d.count("charlie")) < 5 * np.sqrt(idler)


def test_lossless_pairs_share_slot_and_bin():
    d = generate_pairs(source())
    e, n = linked_slot_disagreement(d, P, "bob")
    assert e == 0 and n == d.count("bob")


def test_zero_pair_rate_yields_only_darks():
    d = generate_pairs(source(pair_rate=0.0, dark_count_rate=1e3))
    assert np.all(d.pair_ids["alice"] == -1)


def test_unsorted_detections_rejected():
    with pytest.raises(ValueError):
        RawDetections({"alice": np.array([5, 3])}, 10)


def test_perturbation_preserves_frame_and_offset():
    d = generate_pairs(source())
    out = apply_eavesdropping(d, ChannelPerturbation(0.5, 0.1), P, seed=1)
    for party in ("bob", "charlie"):
        order_a = np.argsort(d.pair_ids[party])
        order_b = np.argsort(out.pair_ids[party])
        t0, t1 = d.times[party][order_a], out.times[party][order_b]
        f0, _, b0 = encode_times(t0, P)
        f1, _, b1 = encode_times(t1, P)
        assert np.array_equal(f0, f1) and np.array_equal(b0, b1)
    assert np.array_equal(out.times["alice"], d.times["alice"])


@pytest.mark.parametrize("chi", [0.1, 0.5, 1.0])
def test_eavesdrop_error_rate(chi):
    d = generate_pairs(source(duration=0.5))
    out = apply_eavesdropping(d, ChannelPerturbation(chi, 0.0), P, seed=2)
    e, n = linked_slot_disagreement(out, P, "bob")
    expect = chi * (P.M - 1) / P.M
    assert abs(e / n - expect) < 5 * np.sqrt(expect * (1 - expect) / n)


def test_intrinsic_error_always_moves_slot():
    d = generate_pairs(source())
    out = apply_eavesdropping(d, ChannelPerturbation(0.0, 1.0), P, seed=2)
    e, n = linked_slot_disagreement(out, P, "charlie")
    assert e == n


def test_calibration_hits_target():
    base = source(duration=0.5, jitter_sigma=34.0)
    for knob in ("intrinsic", "eavesdrop"):
        pert = calibrate_error(0.05, base, P, knob=knob)
        d = apply_eavesdropping(generate_pairs(base.__class__(**{**base.__dict__, "seed": 9})), pert, P, 5)
        e, n = sifted_slot_error(d, P)
        assert abs(e / n - 0.05) < 5 * np.sqrt(0.05 * 0.95 / n)


def test_calibration_below_floor_fails():
    base = source(duration=0.2, jitter_sigma=150.0)
    with pytest.raises(CalibrationError):
        calibrate_error(0.0, base, P)
