import math

import numpy as np
import pytest

from src.components.core_rand import EstimateKind, RngStream, SortedPointSet1D
from src.components.sobolev1d import (
    SobolevParams1D,
    expected_radius_mc_1d,
    integration_radius_note,
    optimal_nodes_1d,
    optimal_surrogate_1d,
    power_sum_root_mc,
    radius_surrogate_1d,
    theory_rate_1d,
)
from src.exception import InvalidParameterError
from src.utils import fit_rate


def test_params_exponents():
    params = SobolevParams1D(2.0, 1.0)
    assert params.max_gap_exponent == pytest.approx(1.5)
    assert params.power_sum_order == pytest.approx(2.0)
    assert SobolevParams1D(math.inf, 1.0).power_sum_order == pytest.approx(1.0)
    assert SobolevParams1D(1.0, math.inf).is_degenerate
    with pytest.raises(InvalidParameterError):
        SobolevParams1D(0.5, 1.0)


def test_midpoint_surrogates():
    # gaps 1/8, 1/4, 1/4, 1/4, 1/8
    value = optimal_surrogate_1d(4, SobolevParams1D(2.0, 1.0)).value
    assert value == pytest.approx(math.sqrt(2 / 512 + 3 / 64), rel=1e-12)
    assert value == pytest.approx(0.22535, abs=1e-5)
    assert optimal_surrogate_1d(4, SobolevParams1D(2.0, 2.0)).value == pytest.approx(0.25)
    np.testing.assert_allclose(optimal_nodes_1d(4).points, [0.125, 0.375, 0.625, 0.875])


def test_degenerate_surrogate_is_constant():
    estimate = radius_surrogate_1d(SortedPointSet1D(np.array([0.1, 0.7])), SobolevParams1D(1.0, math.inf))
    assert estimate.value == 1.0
    assert estimate.degenerate
    assert estimate.kind is EstimateKind.SURROGATE


def test_empty_point_set_has_unit_gap():
    estimate = radius_surrogate_1d(SortedPointSet1D(np.array([])), SobolevParams1D(2.0, 2.0))
    assert estimate.value == pytest.approx(1.0)


def test_integration_uses_q_one():
    assert integration_radius_note(6, 3.0).value == pytest.approx(optimal_surrogate_1d(6, SobolevParams1D(3.0, 1.0)).value)


def test_monte_carlo_needs_enough_trials():
    with pytest.raises(InvalidParameterError):
        expected_radius_mc_1d(10, SobolevParams1D(2.0, 1.0), 50, RngStream(0))


def test_monte_carlo_infinite_p_matches_closed_form():
    # p = inf, q = 1 gives s = 1 and E[sum l_i^2] = 2/(n+2)
    n = 10
    estimate = expected_radius_mc_1d(n, SobolevParams1D(math.inf, 1.0), 20000, RngStream(8))
    assert abs(estimate.value - 2.0 / (n + 2)) <= 4 * estimate.std_error


def test_theory_rates():
    assert theory_rate_1d(100, SobolevParams1D(2.0, 1.0)) == pytest.approx(0.01)
    assert theory_rate_1d(100, SobolevParams1D(2.0, 2.0)) == pytest.approx(math.log(100) / 100)
    with pytest.raises(InvalidParameterError):
        theory_rate_1d(1, SobolevParams1D(2.0, 1.0))


@pytest.mark.parametrize("p", [2.0, math.inf])
def test_rate_slope_for_p_above_q(p):
    params = SobolevParams1D(p, 1.0)
    rows = []
    for index, n in enumerate(2 ** np.arange(4, 11)):
        estimate = expected_radius_mc_1d(int(n), params, 200, RngStream(17).child(index))
        rows.append(dict(n=int(n), estimate=estimate.value))
    assert fit_rate(rows, "log_n").slope == pytest.approx(-1.0, abs=0.1)


def test_rate_window_for_p_at_most_q():
    params = SobolevParams1D(2.0, 2.0)
    normalized = []
    for index, n in enumerate((16, 64, 256, 1024)):
        estimate = expected_radius_mc_1d(n, params, 200, RngStream(23).child(index))
        normalized.append(estimate.value * (n / math.log(n)) ** params.max_gap_exponent)
    assert max(normalized) / min(normalized) <= 3.0


def test_power_sum_root_is_order_one_over_n():
    n = 200
    estimate = power_sum_root_mc(n, 2.0, 500, RngStream(4))
    assert 0.5 < n * estimate.value < 5.0


def test_single_node_expected_max_gap():
    # p = q = 2 reduces the surrogate to the max gap, E[max(U, 1 - U)] = 3/4
    estimate = expected_radius_mc_1d(1, SobolevParams1D(2.0, 2.0), 20000, RngStream(30))
    assert abs(estimate.value - 0.75) <= 4 * estimate.std_error


@pytest.mark.parametrize("q", [1.0, 2.0])
def test_inserting_points_never_increases_the_surrogate(q):
    params = SobolevParams1D(2.0, q)
    draws = np.random.default_rng(40).uniform(size=30)
    values = [radius_surrogate_1d(SortedPointSet1D(np.sort(draws[:k])), params).value for k in range(31)]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(values, values[1:]))


def test_power_sum_ignores_the_order_of_gaps():
    params = SobolevParams1D(3.0, 1.0)
    generator = np.random.default_rng(41)
    points = SortedPointSet1D(np.sort(generator.uniform(size=12)))
    gaps = np.diff(np.concatenate(([0.0], points.points, [1.0])))
    shuffled = SortedPointSet1D(np.minimum(np.cumsum(generator.permutation(gaps))[:-1], 1.0))
    assert radius_surrogate_1d(shuffled, params).value == pytest.approx(radius_surrogate_1d(points, params).value,
                                                                        rel=1e-10)


@pytest.mark.parametrize("q", [2.0, math.inf])
@pytest.mark.parametrize("n", [2, 3, 5, 10])
def test_midpoints_are_optimal_up_to_the_boundary_factor(n, q):
    params = SobolevParams1D(2.0, q)
    factor = ((n + 1) / n) ** params.max_gap_exponent
    optimal = optimal_surrogate_1d(n, params).value
    generator = np.random.default_rng(50 + n)
    # boundary gaps count in full: a random max gap can drop to 1/(n+1), never below
    for _ in range(500):
        random_set = SortedPointSet1D(np.sort(generator.uniform(size=n)))
        assert optimal <= factor * radius_surrogate_1d(random_set, params).value + 1e-12
    equispaced = SortedPointSet1D(np.arange(1, n + 1) / (n + 1))
    assert factor * radius_surrogate_1d(equispaced, params).value == pytest.approx(optimal, rel=1e-12)


@pytest.mark.parametrize("s", [1.0, 2.0])
def test_power_sum_root_window_over_n(s):
    scaled = []
    for index, n in enumerate((16, 64, 256, 1024, 4096)):
        estimate = power_sum_root_mc(n, s, 200, RngStream(43).child(index))
        scaled.append(n * estimate.value)
    assert all(1.0 < value < 4.0 for value in scaled)
    assert max(scaled) / min(scaled) <= 1.5
