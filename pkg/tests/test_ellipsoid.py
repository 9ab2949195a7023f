import math

import numpy as np
import pytest

from src.components.core_rand import RngStream
from src.components.ellipsoid import (
    AxisLaw,
    ConstantAxes,
    EllipsoidConfig,
    Regime,
    SemiAxes,
    circumradius,
    classify_regime,
    dichotomy_experiment,
    expected_radius_mc_ell,
    kernel_basis,
    optimal_radius_ell,
    sandwich_check,
    truncation_dimension,
)
from src.exception import InvalidParameterError, NumericalError


def test_kernel_basis_edge_shapes():
    np.testing.assert_array_equal(kernel_basis(np.empty((0, 3))), np.eye(3))
    assert kernel_basis(np.eye(3)).shape == (3, 0)
    with pytest.raises(InvalidParameterError):
        kernel_basis(np.ones((3, 2)))


def test_kernel_basis_is_orthonormal_and_annihilated():
    G = np.ones((1, 3))
    B = kernel_basis(G)
    assert B.shape == (3, 2)
    np.testing.assert_allclose(B.T @ B, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(G @ B, 0.0, atol=1e-12)
    assert np.all(B[np.argmax(np.abs(B) > 1e-12, axis=0), [0, 1]] > 0)


def test_kernel_basis_rejects_rank_deficiency():
    with pytest.raises(NumericalError):
        kernel_basis(np.array([[1.0, 1.0], [2.0, 2.0]]))


def test_circumradius_without_information_is_largest_axis():
    sigma = SemiAxes([3.0, 2.0, 1.0])
    assert circumradius(sigma, kernel_basis(np.empty((0, 3)))) == pytest.approx(3.0)


def test_circumradius_of_sphere():
    B = kernel_basis(np.random.default_rng(0).standard_normal((2, 6)))
    assert circumradius(np.full(6, 2.5), B) == pytest.approx(2.5, abs=1e-12)


def test_circumradius_of_diagonal_line():
    # M = (1/2)(1/4 + 1) = 5/8
    B = np.array([[1.0], [1.0]]) / math.sqrt(2)
    assert circumradius([2.0, 1.0], B) == pytest.approx(math.sqrt(8 / 5))


def test_circumradius_of_trivial_section():
    assert circumradius([1.0, 0.5], np.empty((2, 0))) == 0.0


def test_circumradius_ignores_basis_rotation():
    generator = np.random.default_rng(1)
    sigma = AxisLaw(1.0).semi_axes(8)
    B = kernel_basis(generator.standard_normal((3, 8)))
    Q, _ = np.linalg.qr(generator.standard_normal((5, 5)))
    assert circumradius(sigma, B @ Q) == pytest.approx(circumradius(sigma, B), rel=1e-10)


def test_circumradius_is_monotone():
    generator = np.random.default_rng(2)
    G = generator.standard_normal((5, 10))
    small = AxisLaw(1.0).semi_axes(10)
    large = AxisLaw(0.5).semi_axes(10)
    B = kernel_basis(G)
    assert circumradius(small, B) <= circumradius(large, B) + 1e-12
    values = [circumradius(small, kernel_basis(G[:n])) for n in range(6)]
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


def test_inverse_iteration_matches_dense_eigensolver():
    sigma = AxisLaw(1.0).semi_axes(8)
    B = kernel_basis(np.random.default_rng(3).standard_normal((3, 8)))
    dense = circumradius(sigma, B)
    iterative = circumradius(sigma, B, EllipsoidConfig(dense_limit=2))
    assert iterative == pytest.approx(dense, rel=1e-6)


def test_sandwich_holds_for_random_information():
    sigma = AxisLaw(0.7).semi_axes(30)
    generator = np.random.default_rng(4)
    for n in (0, 1, 10, 29, 30):
        ok, r = sandwich_check(sigma, kernel_basis(generator.standard_normal((n, 30))))
        assert ok
        assert sigma[n + 1] - 1e-10 <= r <= sigma[1] + 1e-10


def test_semi_axes_validation_and_indexing():
    sigma = SemiAxes([2.0, 1.0])
    assert sigma[1] == 2.0
    assert sigma[3] == 0.0
    with pytest.raises(InvalidParameterError):
        SemiAxes([1.0, 2.0])
    with pytest.raises(InvalidParameterError):
        SemiAxes([1.0, 0.0])
    with pytest.raises(InvalidParameterError):
        AxisLaw(0.0)


def test_optimal_radius():
    sigma = AxisLaw(1.0).semi_axes(10)
    assert optimal_radius_ell(sigma, 0) == 1.0
    assert optimal_radius_ell(sigma, 4) == pytest.approx(0.2)
    assert optimal_radius_ell(sigma, 10) == 0.0


def test_classify_regime():
    assert classify_regime(AxisLaw(1.0)).regime is Regime.OPTIMAL_ORDER
    assert classify_regime(AxisLaw(0.5, 1.0)).regime is Regime.SQRT_LOG_PENALTY
    assert classify_regime(AxisLaw(0.5, 0.5)).regime is Regime.USELESS_BELOW_CM
    assert classify_regime(AxisLaw(0.3)).regime is Regime.USELESS_BELOW_CM
    assert classify_regime(ConstantAxes()).regime is Regime.USELESS_BELOW_CM


def test_threshold_scales():
    assert classify_regime(AxisLaw(1.0)).threshold_scale(100) == 100.0
    assert classify_regime(AxisLaw(0.5, 1.0)).threshold_scale(100) == pytest.approx(10.0)
    assert classify_regime(ConstantAxes()).threshold_scale(100) == pytest.approx(100.0)
    assert classify_regime(AxisLaw(0.5)).threshold_scale(100) == pytest.approx(math.log(100))
    with pytest.raises(InvalidParameterError):
        classify_regime(AxisLaw(1.0)).threshold_scale(2)


def test_truncation_dimension():
    assert abs(truncation_dimension(AxisLaw(1.0)) - 10000) <= 1
    assert truncation_dimension(AxisLaw(0.5)) is None
    assert truncation_dimension(ConstantAxes()) is None


def test_monte_carlo_on_sphere_is_exact():
    estimate = expected_radius_mc_ell(np.ones(20), 5, 20, RngStream(1))
    assert estimate.value == pytest.approx(1.0, abs=1e-12)


def test_monte_carlo_needs_enough_trials():
    with pytest.raises(InvalidParameterError):
        expected_radius_mc_ell(np.ones(5), 2, 10, RngStream(0))


def test_square_summable_radius_beats_inverse_sqrt_n():
    sigma = AxisLaw(1.0).semi_axes(200)
    scaled = []
    for index, n in enumerate((10, 20, 40)):
        estimate = expected_radius_mc_ell(sigma, n, 20, RngStream(5).child(index))
        scaled.append(math.sqrt(n) * estimate.value)
    assert scaled[0] > scaled[1] > scaled[2]


def test_dichotomy_for_sphere_is_useless():
    table = dichotomy_experiment(ConstantAxes(), [10, 20], [1, 5, 30], 20, RngStream(6))
    ratios = table[table["statistic"] == "radius_over_sigma1"]
    assert len(ratios) == 4
    np.testing.assert_allclose(ratios["estimate"], 1.0, atol=1e-12)
    assert "sqrt_n_radius" not in set(table["statistic"])


def test_harmonic_axes_stay_within_a_constant_of_optimal():
    table = dichotomy_experiment(AxisLaw(1.0), [500], [5, 10, 20, 40], 20, RngStream(7))
    means = table[table["statistic"] == "mean_radius"]
    normalized = (means["estimate"] / means["exact_value"]).to_numpy()
    assert len(normalized) == 4
    assert (normalized >= 1.0 - 1e-10).all()
    assert normalized.max() / normalized.min() <= 1.5


def test_slow_decay_makes_random_information_useless():
    table = dichotomy_experiment(AxisLaw(0.25), [20, 200, 2000], 5, 20, RngStream(8))
    ratios = table[table["statistic"] == "radius_over_sigma1"]["estimate"].to_numpy()
    assert len(ratios) == 3
    assert ratios[0] < ratios[1] < ratios[2]
    assert ratios[-1] >= 0.9


def test_sqrt_log_regime_window():
    table = dichotomy_experiment(AxisLaw(0.5, 1.0), [1000], [4, 8, 16], 20, RngStream(9))
    means = table[table["statistic"] == "mean_radius"]
    normalized = (means["estimate"] / means["theory_rate"]).to_numpy()
    assert len(normalized) == 3
    assert normalized.max() / normalized.min() <= 2.5
