import math

import numpy as np
import pytest

from ghostsig.security import (
    InfeasibleSecurity,
    SecurityParams,
    epsilon_curve,
    effective_guess_failure,
    epsilon_surface,
    forge_bound,
    message_forge_bound,
    honest_abort_bound,
    optimal_epsilon,
    optimize_thresholds,
    repudiation_bound,
    required_L,
    security_level,
)

REFERENCE = SecurityParams(0.0378, 0.447, 939, 0.1410, 0.3474)


def test_component_bounds_by_hand():
    assert honest_abort_bound(REFERENCE) == pytest.approx(2 * math.exp(-(0.1410 - 0.0378) ** 2 * 939))
    assert repudiation_bound(REFERENCE) == pytest.approx(2 * math.exp(-((0.3474 - 0.1410) / 2) ** 2 * 939))
    assert forge_bound(REFERENCE) == pytest.approx(math.exp(-(0.447 - 0.3474) ** 2 * 939))


def test_reference_security_level():
    rep = security_level(REFERENCE)
    for v in (rep.p_honest_abort, rep.p_repudiation, rep.p_forge):
        assert 9.0e-5 <= v <= 9.1e-5
    assert rep.epsilon == pytest.approx(0.91e-4, rel=0.02)
    assert REFERENCE.ordered


def test_union_bound_scales():
    rep = security_level(REFERENCE)
    assert rep.union(10)["epsilon"] == pytest.approx(10 * rep.epsilon)
    assert rep.as_dict(10)["union_bound"]["n_slots"] == 10


def test_optimizer_respects_ordering():
    th_b, th_c, eps = optimize_thresholds(0.0378, 0.447, 100)
    assert 0.0378 < th_b < th_c < 0.447
    assert eps == pytest.approx(security_level(SecurityParams(0.0378, 0.447, 100, th_b, th_c)).epsilon)


def test_optimizer_beats_reference_thresholds():
    assert optimize_thresholds(0.0378, 0.447, 939)[2] <= security_level(REFERENCE).epsilon


def test_optimum_at_two_second_count():
    # L = 552 at 2 s of measurement
    assert optimal_epsilon(0.0378, 0.447, 552) == pytest.approx(5.19e-3, rel=0.01)


def test_infeasible_inputs():
    with pytest.raises(InfeasibleSecurity):
        optimize_thresholds(0.5, 0.4, 100)
    with pytest.raises(InfeasibleSecurity):
        required_L(0.0378, 0.447, 0.0)
    assert required_L(0.0378, 0.447, 1.5) == 0
    assert optimal_epsilon(0.0378, 0.447, 0) == 2.0


def test_required_L_is_minimal():
    L = required_L(0.0378, 0.447, 1e-3)
    assert optimal_epsilon(0.0378, 0.447, L) <= 1e-3 < optimal_epsilon(0.0378, 0.447, L - 1)


def test_optimal_epsilon_decreases_with_L():
    eps = [row[3] for row in epsilon_curve(0.0378, 0.447, [100, 200, 400, 800, 1600])]
    assert all(a > b for a, b in zip(eps, eps[1:]))


def test_surface_masks_unordered_thresholds():
    B, C, E = epsilon_surface(0.0378, 0.447, 552, n=20)
    assert np.all(np.isnan(E[B >= C]))
    assert np.all(np.isfinite(E[B < C]))


def test_message_adjusted_forge_bound():
    assert effective_guess_failure(0.447, 9, 10) == pytest.approx(0.447)
    assert effective_guess_failure(0.447, 5, 10) == pytest.approx(0.447 * 5 / 9)
    assert message_forge_bound(REFERENCE, 9, 10) == pytest.approx(forge_bound(REFERENCE))
    # five ones: 0.248 < Th_C, no protection left
    assert message_forge_bound(REFERENCE, 5, 10) == 1.0
    with pytest.raises(ValueError):
        effective_guess_failure(0.447, 0, 10)
