import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ghostsig.timebase import (
    EncodingParams,
    PhotonRecord,
    common_frames,
    decode_record,
    decode_records,
    encode_time,
    encode_times,
    single_occupancy,
)

P = EncodingParams()


def test_default_widths():
    assert P.slot_width == 300
    assert P.frame_period == 3000
    assert P.M == 10


@pytest.mark.parametrize(
    "t, rec",
    [
        (0, (0, 0, 0)),
        (19, (0, 0, 0)),
        (20, (0, 0, 1)),
        (299, (0, 0, 14)),
        (300, (0, 1, 0)),
        (2999, (0, 9, 14)),
        (3000, (1, 0, 0)),
        (3000 * 7 + 300 * 4 + 20 * 11 + 5, (7, 4, 11)),
    ],
)
def test_encode_examples(t, rec):
    assert encode_time(t, P) == PhotonRecord(*rec)


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        encode_time(-1, P)
    with pytest.raises(ValueError):
        encode_times(np.array([5, -2]), P)


@pytest.mark.parametrize("kw", [dict(bin_width=0), dict(bins_per_slot=0), dict(slots_per_frame=1)])
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        EncodingParams(**kw)


def test_decode_rejects_out_of_range():
    with pytest.raises(ValueError):
        decode_record(PhotonRecord(0, 10, 0), P)
    with pytest.raises(ValueError):
        decode_record(PhotonRecord(0, 0, 15), P)
    with pytest.raises(ValueError):
        decode_records([0], [0], [15], P)


@pytest.mark.parametrize("w, b, m", list(itertools.product((1, 2, 3), (1, 2, 4), (2, 3, 5))))
def test_roundtrip_exhaustive_small(w, b, m):
    p = EncodingParams(w, b, m)
    times = np.arange(3 * p.frame_period)
    f, s, bb = encode_times(times, p)
    edges = decode_records(f, s, bb, p)
    assert np.all(edges <= times) and np.all(times - edges < w)
    for t in times[:: max(1, times.size // 50)]:
        r = encode_time(int(t), p)
        assert (r.frame, r.slot, r.bin) == (f[t], s[t], bb[t])
        assert encode_time(decode_record(r, p), p) == r


@given(st.integers(0, 10**13), st.integers(1, 50), st.integers(1, 30), st.integers(2, 40))
def test_roundtrip_property(t, w, b, m):
    p = EncodingParams(w, b, m)
    r = encode_time(t, p)
    r.check(p)
    edge = decode_record(r, p)
    assert 0 <= t - edge < w
    assert encode_time(edge, p) == r


def test_single_occupancy():
    frames = np.array([0, 1, 1, 2, 5, 5, 5, 6])
    assert single_occupancy(frames).tolist() == [True, False, False, True, False, False, False, True]
    assert single_occupancy(np.array([], dtype=np.int64)).size == 0


@given(st.lists(st.integers(0, 30), max_size=40), st.lists(st.integers(0, 30), max_size=40))
def test_common_frames_matches_set_intersection(a, b):
    a = np.unique(np.array(a, dtype=np.int64))
    b = np.unique(np.array(b, dtype=np.int64))
    ia, ib = common_frames(a, b)
    assert np.array_equal(a[ia], b[ib])
    assert set(a[ia].tolist()) == set(a.tolist()) & set(b.tolist())
