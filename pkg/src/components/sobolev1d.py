"""Spacing surrogates for the radius of L_q-approximation on W^1_p([0,1]).

The radius from n function values is equivalent (up to unspecified constants)
to an explicit functional of the spacings ``l_i``:

* p > q: ``(sum l_i^(s+1))^(1/s)`` with ``1/s = 1/q - 1/p``
* p <= q: ``max l_i^(1 - 1/p + 1/q)``

Only this functional is computed; rates are compared, constants never are.
"""
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.components.core_rand import (
    CoreRandConfig,
    EstimateKind,
    RadiusEstimate,
    RngStream,
    SortedPointSet1D,
    monte_carlo,
    spacings,
    spacings_batch,
    uniform_sorted_batch,
)
from src.exception import CustomException, InvalidParameterError
from src.logger import logging
from src.utils import fitted_slope_rows


def reciprocal(value: float) -> float:
    return 0.0 if math.isinf(value) else 1.0 / value


@dataclass(frozen=True)
class SobolevParams1D:
    p: float
    q: float

    def __post_init__(self):
        for name, value in (("p", self.p), ("q", self.q)):
            if math.isnan(value) or value < 1.0:
                raise InvalidParameterError(f"{name} must lie in [1, inf], got {value}")

    @property
    def max_gap_exponent(self) -> float:
        return 1.0 - reciprocal(self.p) + reciprocal(self.q)

    @property
    def power_sum_order(self) -> float:
        """s with 1/s = 1/q - 1/p; only meaningful for p > q."""
        return 1.0 / (reciprocal(self.q) - reciprocal(self.p))

    @property
    def is_degenerate(self) -> bool:
        return self.p == 1.0 and math.isinf(self.q)


@dataclass
class Sobolev1DConfig:
    block_size: int = CoreRandConfig.block_size
    n_jobs: int = CoreRandConfig.n_jobs
    min_trials: int = 100


def _surrogate_from_gaps(gaps: np.ndarray, params: SobolevParams1D) -> np.ndarray:
    """Surrogate per row of a (trials, n+1) gap array."""
    if params.p > params.q:
        s = params.power_sum_order
        return np.sum(gaps ** (s + 1.0), axis=-1) ** (1.0 / s)
    if params.is_degenerate:
        return np.ones(gaps.shape[:-1])
    return np.max(gaps, axis=-1) ** params.max_gap_exponent


def radius_surrogate_1d(points: SortedPointSet1D, params: SobolevParams1D) -> RadiusEstimate:
    if params.is_degenerate:
        logging.warning('Degenerate exponent for p=1, q=inf : surrogate is constant')
    value = float(_surrogate_from_gaps(spacings(points).gaps, params))
    return RadiusEstimate(value=value, kind=EstimateKind.SURROGATE, degenerate=params.is_degenerate)


def optimal_nodes_1d(n: int) -> SortedPointSet1D:
    """Midpoints (2i-1)/(2n), i = 1..n.

    Their max gap is 1/n, while n points anywhere leave a gap of at least 1/(n+1), so
    for p <= q the midpoint surrogate is within a factor ((n+1)/n)^(1 - 1/p + 1/q) of
    any other set of the same size.
    """
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    return SortedPointSet1D((2.0 * np.arange(1, n + 1) - 1.0) / (2.0 * n))


def optimal_surrogate_1d(n: int, params: SobolevParams1D) -> RadiusEstimate:
    return radius_surrogate_1d(optimal_nodes_1d(n), params)


def expected_radius_mc_1d(n: int, params: SobolevParams1D, trials: int, rng: RngStream,
                          config: Optional[Sobolev1DConfig] = None) -> RadiusEstimate:
    config = config or Sobolev1DConfig()
    if trials < config.min_trials:
        raise InvalidParameterError(f"trials must be at least {config.min_trials}, got {trials}")
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")

    def statistic(generator, size):
        return _surrogate_from_gaps(spacings_batch(uniform_sorted_batch(generator, size, n)), params)

    values = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
    return RadiusEstimate.from_samples(values, degenerate=params.is_degenerate)


def integration_radius_note(n: int, p: float, points: Optional[SortedPointSet1D] = None) -> RadiusEstimate:
    """Radius for integration on W^1_p, which coincides with L_1-approximation."""
    return radius_surrogate_1d(points if points is not None else optimal_nodes_1d(n), SobolevParams1D(p, 1.0))


def power_sum_root_mc(n: int, s: float, trials: int, rng: RngStream,
                      config: Optional[Sobolev1DConfig] = None) -> RadiusEstimate:
    """Monte Carlo E[(sum l_i^(s+1))^(1/s)], which is of order 1/n for every s > 0."""
    config = config or Sobolev1DConfig()
    if s <= 0:
        raise InvalidParameterError(f"s must be positive, got {s}")

    def statistic(generator, size):
        gaps = spacings_batch(uniform_sorted_batch(generator, size, n))
        return np.sum(gaps ** (s + 1.0), axis=1) ** (1.0 / s)

    return RadiusEstimate.from_samples(monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs))


def theory_rate_1d(n: int, params: SobolevParams1D) -> float:
    if n < 2:
        raise InvalidParameterError(f"rates need n >= 2, got {n}")
    if params.p > params.q:
        return 1.0 / n
    return (n / math.log(n)) ** -params.max_gap_exponent


class Sobolev1DExperiment:
    def __init__(self, config: Optional[Sobolev1DConfig] = None):
        self.sobolev1d_config = config or Sobolev1DConfig()

    def initiate_experiment(self, params, rng: RngStream, integration: bool = False):
        statistic = "integration_radius" if integration else "mean_surrogate"
        p = params.p if params.p is not None else 2.0
        q = 1.0 if integration else (params.q if params.q is not None else 1.0)
        logging.info(f'Sobolev 1d experiment started : p={p}, q={q}, n grid {params.n_grid}')
        try:
            sobolev_params = SobolevParams1D(p, q)
            rows = []
            for index, n in enumerate(params.n_grid):
                estimate = expected_radius_mc_1d(n, sobolev_params, params.trials, rng.child(index),
                                                 self.sobolev1d_config)
                optimal = None
                if n >= 1:
                    optimal = integration_radius_note(n, p) if integration else optimal_surrogate_1d(n, sobolev_params)
                note = "degenerate exponent" if estimate.degenerate else None
                row = dict(statistic=statistic, n=n, p=p, q=q, trials=params.trials, estimate=estimate.value,
                           std_error=estimate.std_error,
                           theory_rate=theory_rate_1d(n, sobolev_params) if n >= 2 else None, note=note)
                rows.append(row)
                yield row
                if optimal is not None:
                    yield dict(statistic="optimal_surrogate", n=n, p=p, q=q, estimate=optimal.value,
                               exact_value=optimal.value, note=note)
                logging.info(f'Sobolev 1d estimate completed for n={n} : {estimate.value}')

            yield from fitted_slope_rows(rows, x_transform="log_n" if p > q else "log_n_over_log_n",
                                         expected_slope=-1.0 if p > q else -sobolev_params.max_gap_exponent,
                                         p=p, q=q)

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in Sobolev 1d experiment')
            raise CustomException(e, sys)
