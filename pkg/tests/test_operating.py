import numpy as np

from ghostsig.operating import (
    REFERENCE_ERROR_RATE,
    reference_operating_point,
    simulate,
    simulate_detections,
    toy_operating_point,
)


def test_reference_point_structure():
    op = reference_operating_point()
    assert op.encoding.frame_period == 3000
    assert op.source.duration == 2.0
    assert op.e_ref == REFERENCE_ERROR_RATE


def test_simulation_is_deterministic():
    op = toy_operating_point(duration=0.05)
    a, b = simulate_detections(op, 5), simulate_detections(op, 5)
    assert all(np.array_equal(a.times[p], b.times[p]) for p in a.times)


def test_short_reference_run_scales():
    # a quarter of the standard measurement time gives about a quarter of the counts
    dist = simulate(reference_operating_point(duration=0.5), seed=2)
    assert abs(dist.bob.keep.per_slot_mean - 561.93 / 4) < 5 * np.sqrt(561.93 / 4 / 10)
