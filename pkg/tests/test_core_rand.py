import math

import numpy as np
import pytest

from src.components.core_rand import (
    EstimateKind,
    RadiusEstimate,
    RngStream,
    SortedPointSet1D,
    SpacingProfile,
    coupon_simulate,
    coupon_simulate_batch,
    coupon_stats,
    coupon_tail_bound,
    coupon_tail_exact,
    expected_max_gap_exact,
    expected_power_sum_exact,
    expected_spacing_functional,
    harmonic_number,
    max_gap,
    monte_carlo,
    power_sum,
    sample_uniform_sorted,
    spacings,
    spacings_batch,
    summarize,
    uniform_sorted_batch,
)
from src.exception import InvalidParameterError, InvariantViolationError


def test_stream_is_reproducible_and_children_differ():
    rng = RngStream(7)
    first = rng.generator().random(5)
    np.testing.assert_array_equal(first, RngStream(7).generator().random(5))
    assert not np.array_equal(first, rng.child(0).generator().random(5))
    assert not np.array_equal(rng.child(0).generator().random(5), rng.child(1).generator().random(5))


def test_stream_rejects_negative_seed():
    with pytest.raises(InvalidParameterError):
        RngStream(-1)


def _uniform(generator, size):
    return generator.random(size)


def test_monte_carlo_blocks_use_indexed_children():
    rng = RngStream(11)
    values = monte_carlo(_uniform, 25, rng, block_size=10)
    expected = np.concatenate([rng.child(b).generator().random(size) for b, size in enumerate((10, 10, 5))])
    np.testing.assert_array_equal(values, expected)


def test_monte_carlo_does_not_depend_on_worker_count():
    rng = RngStream(3)
    serial = monte_carlo(_uniform, 35, rng, block_size=10, n_jobs=1)
    parallel = monte_carlo(_uniform, 35, rng, block_size=10, n_jobs=2)
    np.testing.assert_array_equal(serial, parallel)


def test_monte_carlo_rejects_bad_statistic_shape():
    with pytest.raises(InvariantViolationError):
        monte_carlo(lambda generator, size: generator.random(size + 1), 10, RngStream(0))


def test_spacings_sum_to_one():
    points = sample_uniform_sorted(20, RngStream(1))
    gaps = spacings(points).gaps
    assert gaps.size == 21
    assert math.fsum(gaps) == pytest.approx(1.0, abs=1e-12)
    assert np.all(gaps >= 0)


def test_spacings_of_empty_set_is_single_gap():
    np.testing.assert_array_equal(spacings(SortedPointSet1D(np.array([]))).gaps, [1.0])


def test_invalid_profiles_and_point_sets():
    with pytest.raises(InvariantViolationError):
        SpacingProfile(np.array([0.5, 0.6]))
    with pytest.raises(InvalidParameterError):
        SortedPointSet1D(np.array([0.6, 0.2]))
    with pytest.raises(InvalidParameterError):
        SortedPointSet1D(np.array([1.2]))


def test_spacings_batch_rows():
    generator = RngStream(5).generator()
    gaps = spacings_batch(uniform_sorted_batch(generator, 4, 6))
    assert gaps.shape == (4, 7)
    np.testing.assert_allclose(gaps.sum(axis=1), 1.0, atol=1e-12)


def test_power_sum_and_max_gap_on_known_profile():
    profile = SpacingProfile(np.array([0.25, 0.25, 0.5]))
    assert power_sum(profile, 1.0) == pytest.approx(0.375)
    assert max_gap(profile) == 0.5


def test_expected_power_sum_exact_values():
    assert expected_power_sum_exact(1, 1.0) == pytest.approx(2.0 / 3.0, rel=1e-14)
    assert expected_power_sum_exact(0, 2.5) == 1.0
    # (n+1)!(s+1)!/(n+s+1)! with n=3, s=2: 4! 3! / 6!
    assert expected_power_sum_exact(3, 2.0) == pytest.approx(24 * 6 / 720, rel=1e-12)


def test_spacing_functional_matches_power_sum_identity():
    for n, s in ((10, 2.0), (50, 1.0), (200, 3.0)):
        value = expected_spacing_functional(n, lambda r, s=s: r ** (s + 1.0))
        assert value == pytest.approx(expected_power_sum_exact(n, s), rel=1e-9)


def test_spacing_functional_edge_cases():
    assert expected_spacing_functional(0, lambda r: 3.0 * r) == 3.0
    with pytest.raises(InvalidParameterError):
        expected_spacing_functional(5, lambda r: r, quadrature_points=16)


def test_monte_carlo_power_sum_matches_exact():
    n, s, trials = 8, 2.0, 20000

    def statistic(generator, size):
        gaps = spacings_batch(uniform_sorted_batch(generator, size, n))
        return np.sum(gaps ** (s + 1.0), axis=1)

    mean, se = summarize(monte_carlo(statistic, trials, RngStream(21)))
    assert abs(mean - expected_power_sum_exact(n, s)) <= 4 * se


def test_expected_max_gap():
    assert expected_max_gap_exact(1) == pytest.approx(0.75)
    assert expected_max_gap_exact(0) == 1.0
    n = 5

    def statistic(generator, size):
        return spacings_batch(uniform_sorted_batch(generator, size, n)).max(axis=1)

    mean, se = summarize(monte_carlo(statistic, 20000, RngStream(2)))
    assert abs(mean - expected_max_gap_exact(n)) <= 4 * se


def test_harmonic_numbers():
    assert harmonic_number(0) == 0.0
    assert harmonic_number(1) == 1.0
    assert harmonic_number(4) == pytest.approx(25.0 / 12.0)
    assert harmonic_number(2 * 10**6) == pytest.approx(math.log(2e6) + np.euler_gamma, rel=1e-9)


def test_coupon_stats_and_simulation():
    stats = coupon_stats(2)
    assert stats.mean == pytest.approx(3.0)
    assert coupon_simulate(1, RngStream(0)) == 1
    draws = coupon_simulate_batch(RngStream(4).generator(), 20000, 2)
    mean, se = summarize(draws)
    assert abs(mean - 3.0) <= 4 * se
    assert draws.min() >= 2


def test_coupon_tail_exact_small_cases():
    assert coupon_tail_exact(1, 0) == 1.0
    assert coupon_tail_exact(1, 1) == 0.0
    assert coupon_tail_exact(2, 2) == pytest.approx(0.5)
    assert coupon_tail_exact(3, 2) == pytest.approx(1.0)


def test_coupon_tail_bound_holds_exactly_and_empirically():
    for ell in (2, 10, 100):
        for c in (1.5, 2.0, 3.0):
            threshold, bound = coupon_tail_bound(ell, c)
            assert coupon_tail_exact(ell, threshold) <= bound + 1e-12

    ell, c = 10, 1.5
    threshold, _ = coupon_tail_bound(ell, c)
    draws = coupon_simulate_batch(RngStream(9).generator(), 20000, ell)
    frequency = float(np.mean(draws > threshold))
    se = math.sqrt(frequency * (1 - frequency) / draws.size)
    assert abs(frequency - coupon_tail_exact(ell, threshold)) <= 4 * se + 1e-3


def test_coupon_tail_bound_rejects_small_ell():
    with pytest.raises(InvalidParameterError):
        coupon_tail_bound(1, 2.0)


def test_radius_estimate_provenance_rules():
    RadiusEstimate(0.1, EstimateKind.EXACT)
    with pytest.raises(InvariantViolationError):
        RadiusEstimate(0.1, EstimateKind.MONTE_CARLO)
    with pytest.raises(InvariantViolationError):
        RadiusEstimate(0.1, EstimateKind.GRID_BOUNDED)
    estimate = RadiusEstimate.from_samples([1.0, 2.0, 3.0])
    assert estimate.kind is EstimateKind.MONTE_CARLO
    assert estimate.value == 2.0
    assert estimate.trials == 3
