"""Seeded randomness, uniform spacings and the coupon collector process.

Every sampling routine takes an :class:`RngStream`; the stream fully determines
the draws, so results do not depend on platform, worker count or scheduling.
"""
import math
import sys
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from scipy.special import digamma, gammaln

from src.exception import CustomException, InvalidParameterError, InvariantViolationError, NumericalError
from src.logger import logging

UINT64_MAX = 2**64 - 1
SPACING_SUM_TOL = 1e-12


@dataclass
class CoreRandConfig:
    block_size: int = 4096
    n_jobs: int = 1
    quadrature_panels: int = 60


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    stream_index: int = 0
    substream: tuple = ()

    def __post_init__(self):
        for value in (self.master_seed, self.stream_index, *self.substream):
            if not 0 <= int(value) <= UINT64_MAX:
                raise InvalidParameterError(f"seed components must be 64-bit unsigned, got {value}")

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_index), *self.substream))

    def generator(self) -> np.random.Generator:
        # Philox is counter based; distinct spawn keys give independent streams
        return np.random.Generator(np.random.Philox(self.seed_sequence()))

    def child(self, index: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_index, self.substream + (int(index),))


class EstimateKind(str, Enum):
    EXACT = "exact"
    SURROGATE = "surrogate"
    GRID_BOUNDED = "grid_bounded"
    MONTE_CARLO = "monte_carlo"


@dataclass(frozen=True)
class RadiusEstimate:
    """A radius value together with where it came from.

    ``systematic_error_bound`` is only used by Monte Carlo estimates whose
    per-trial values are themselves grid evaluations; it bounds the bias of
    the mean, while ``std_error`` covers the sampling noise.
    """
    value: float
    kind: EstimateKind
    std_error: Optional[float] = None
    grid_error_bound: Optional[float] = None
    systematic_error_bound: Optional[float] = None
    degenerate: bool = False
    trials: Optional[int] = None

    def __post_init__(self):
        if not math.isfinite(self.value) or self.value < 0.0:
            raise InvariantViolationError(f"radius must be a finite nonnegative number, got {self.value}")
        if (self.std_error is not None) != (self.kind is EstimateKind.MONTE_CARLO):
            raise InvariantViolationError("std_error is required exactly for monte_carlo estimates")
        if (self.grid_error_bound is not None) != (self.kind is EstimateKind.GRID_BOUNDED):
            raise InvariantViolationError("grid_error_bound is required exactly for grid_bounded estimates")

    @classmethod
    def from_samples(cls, values, degenerate: bool = False, systematic_error_bound: Optional[float] = None):
        mean, std_error = summarize(values)
        return cls(
            value=mean,
            kind=EstimateKind.MONTE_CARLO,
            std_error=std_error,
            systematic_error_bound=systematic_error_bound,
            degenerate=degenerate,
            trials=int(np.size(values)),
        )


@dataclass(frozen=True)
class SortedPointSet1D:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
            raise InvalidParameterError("points must lie in [0, 1]")
        if np.any(np.diff(pts) < 0.0):
            raise InvalidParameterError("points must be sorted ascending")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class SpacingProfile:
    gaps: np.ndarray

    def __post_init__(self):
        gaps = np.asarray(self.gaps, dtype=float).reshape(-1)
        if gaps.size == 0 or np.any(gaps < 0.0):
            raise InvariantViolationError("spacings must be nonnegative and at least one gap must exist")
        total = math.fsum(gaps)
        if abs(total - 1.0) > SPACING_SUM_TOL:
            raise InvariantViolationError(f"spacings sum to {total!r}, not 1")
        object.__setattr__(self, "gaps", gaps)


@dataclass(frozen=True)
class CouponStats:
    ell: int
    mean: float
    variance_bound: float


def summarize(values):
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.size == 0:
        raise InvalidParameterError("cannot summarize an empty sample")
    if values.size == 1:
        return float(values[0]), 0.0
    return float(np.mean(values)), float(np.std(values, ddof=1) / math.sqrt(values.size))


def _run_block(statistic, stream: RngStream, size: int):
    values = np.asarray(statistic(stream.generator(), size), dtype=float)
    if values.shape[:1] != (size,):
        raise InvariantViolationError(f"statistic returned shape {values.shape} for a block of {size} trials")
    return values


def monte_carlo(statistic: Callable, trials: int, rng: RngStream, block_size: Optional[int] = None,
                n_jobs: Optional[int] = None) -> np.ndarray:
    """Evaluate ``statistic(generator, size)`` over ``trials`` draws.

    The statistic returns one value, or one row of values, per trial. Trials
    are cut into fixed blocks and block ``b`` always uses ``rng.child(b)``;
    blocks are concatenated in index order.
    """
    config = CoreRandConfig()
    block_size = int(block_size or config.block_size)
    n_jobs = int(n_jobs or config.n_jobs)
    if trials < 1:
        raise InvalidParameterError(f"trials must be positive, got {trials}")

    sizes = [block_size] * (trials // block_size)
    if trials % block_size:
        sizes.append(trials % block_size)

    if n_jobs == 1:
        blocks = [_run_block(statistic, rng.child(b), size) for b, size in enumerate(sizes)]
    else:
        blocks = Parallel(n_jobs=n_jobs)(
            delayed(_run_block)(statistic, rng.child(b), size) for b, size in enumerate(sizes)
        )
    return np.concatenate(blocks, axis=0)


def sample_uniform_sorted(n: int, rng: RngStream) -> SortedPointSet1D:
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")
    return SortedPointSet1D(np.sort(rng.generator().random(n)))


def uniform_sorted_batch(generator: np.random.Generator, size: int, n: int) -> np.ndarray:
    return np.sort(generator.random((size, n)), axis=1)


def spacings(p: SortedPointSet1D) -> SpacingProfile:
    return SpacingProfile(np.diff(np.concatenate(([0.0], p.points, [1.0]))))


def spacings_batch(points: np.ndarray) -> np.ndarray:
    """Row-wise spacings of a (trials, n) array of sorted rows."""
    size = points.shape[0]
    padded = np.hstack((np.zeros((size, 1)), points, np.ones((size, 1))))
    gaps = np.diff(padded, axis=1)
    drift = np.max(np.abs(gaps.sum(axis=1) - 1.0)) if size else 0.0
    if drift > SPACING_SUM_TOL:
        raise InvariantViolationError(f"sampled spacings drift from 1 by {drift!r}")
    return gaps


def power_sum(g: SpacingProfile, s: float) -> float:
    if s < 0:
        raise InvalidParameterError(f"s must be nonnegative, got {s}")
    return float(np.sum(g.gaps ** (s + 1.0)))


def expected_power_sum_exact(n: int, s: float) -> float:
    """E[sum of l_i^(s+1)] = (n+1)! (s+1)! / (n+s+1)!, evaluated with log-gamma.

    n = 0 returns 1: a single gap of length one.
    """
    if n < 0 or s <= 0:
        raise InvalidParameterError(f"need n >= 0 and s > 0, got n={n}, s={s}")
    if n == 0:
        return 1.0
    return float(np.exp(gammaln(n + 2.0) + gammaln(s + 2.0) - gammaln(n + s + 2.0)))


def expected_spacing_functional(n: int, h: Callable, quadrature_points: int = 64,
                                panels: Optional[int] = None) -> float:
    """E[sum h(l_i)] = n(n+1) * int_0^1 (1-r)^(n-1) h(r) dr.

    With u = (1-r)^n the right-hand side is (n+1) * int_0^1 h(1 - u^(1/n)) du.
    The u-integrand has an endpoint singularity at u = 0, so the integral is
    taken with Gauss-Legendre panels on the dyadic mesh 0, 2^-P, ..., 1/2, 1.
    """
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")
    if quadrature_points < 64:
        raise InvalidParameterError(f"quadrature_points must be at least 64, got {quadrature_points}")
    if n == 0:
        value = float(np.asarray(h(np.array([1.0])), dtype=float).reshape(-1)[0])
        if not math.isfinite(value):
            raise NumericalError("h returned a non-finite value at r=1")
        return value

    panels = int(panels or CoreRandConfig().quadrature_panels)
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_points)
    edges = np.concatenate(([0.0], 2.0 ** -np.arange(panels, -1, -1, dtype=float)))
    left, right = edges[:-1, None], edges[1:, None]
    u = (left + (right - left) * (nodes + 1.0) / 2.0).reshape(-1)
    w = ((right - left) / 2.0 * weights).reshape(-1)

    r = -np.expm1(np.log(u) / n)
    values = np.broadcast_to(np.asarray(h(r), dtype=float), r.shape)
    if not np.all(np.isfinite(values)):
        raise NumericalError("h returned non-finite values on the quadrature nodes")
    return float((n + 1) * np.dot(w, values))


def max_gap(g: SpacingProfile) -> float:
    return float(np.max(g.gaps))


def harmonic_number(ell: int) -> float:
    if ell < 0:
        raise InvalidParameterError(f"ell must be nonnegative, got {ell}")
    if ell <= 10**6:
        return math.fsum(1.0 / np.arange(1, ell + 1, dtype=float))
    return float(digamma(ell + 1.0) + np.euler_gamma)


def expected_max_gap_exact(n: int) -> float:
    """E[max spacing] of n uniform points, H_{n+1}/(n+1)."""
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")
    return harmonic_number(n + 1) / (n + 1)


def coupon_stats(ell: int) -> CouponStats:
    if ell < 1:
        raise InvalidParameterError(f"ell must be positive, got {ell}")
    inverse_squares = math.fsum(1.0 / np.arange(1, ell + 1, dtype=float) ** 2)
    return CouponStats(ell=ell, mean=ell * harmonic_number(ell), variance_bound=ell**2 * inverse_squares)


def _waiting_probabilities(ell: int) -> np.ndarray:
    # after k distinct labels a new one appears with probability (ell - k) / ell
    return (ell - np.arange(ell, dtype=float)) / ell


def coupon_simulate(ell: int, rng: RngStream) -> int:
    """One draw of tau_ell, the time until all ell labels have been seen.

    The collection time is the sum of independent geometric waiting times,
    one per newly seen label.
    """
    if ell < 1:
        raise InvalidParameterError(f"ell must be positive, got {ell}")
    return int(rng.generator().geometric(_waiting_probabilities(ell)).sum())


def coupon_simulate_batch(generator: np.random.Generator, size: int, ell: int) -> np.ndarray:
    return generator.geometric(_waiting_probabilities(ell), size=(size, ell)).sum(axis=1)


def coupon_tail_bound(ell: int, c: float):
    if ell < 2 or c <= 0:
        raise InvalidParameterError(f"need ell >= 2 and c > 0, got ell={ell}, c={c}")
    threshold = math.ceil(c * ell * math.log(ell))
    return threshold, float(ell) ** (1.0 - c)


def coupon_tail_exact(ell: int, n: int) -> float:
    """P[tau_ell > n] from the occupancy chain on the number of distinct labels."""
    if ell < 1 or n < 0:
        raise InvalidParameterError(f"need ell >= 1 and n >= 0, got ell={ell}, n={n}")
    k = np.arange(ell + 1, dtype=float)
    stay = k / ell
    advance = (ell - k[:-1]) / ell
    prob = np.zeros(ell + 1)
    prob[0] = 1.0
    for _ in range(n):
        moved = prob[:-1] * advance
        prob = prob * stay
        prob[1:] += moved
    return float(math.fsum(prob[:-1]))


class CoreRandExperiment:
    def __init__(self, config: Optional[CoreRandConfig] = None):
        self.core_rand_config = config or CoreRandConfig()

    def _monte_carlo(self, statistic, trials, rng):
        return monte_carlo(statistic, trials, rng, self.core_rand_config.block_size, self.core_rand_config.n_jobs)

    def initiate_spacing_experiment(self, params, rng: RngStream):
        logging.info(f'Spacing experiment started : n grid {params.n_grid}')
        try:
            s = float(params.s if params.s is not None else 1.0)
            for index, n in enumerate(params.n_grid):
                def statistic(generator, size, n=n):
                    gaps = spacings_batch(uniform_sorted_batch(generator, size, n))
                    return np.column_stack((np.sum(gaps ** (s + 1.0), axis=1), gaps.max(axis=1)))

                draws = self._monte_carlo(statistic, params.trials, rng.child(index))

                mean, se = summarize(draws[:, 0])
                yield dict(statistic="power_sum", n=n, s=s, trials=params.trials, estimate=mean, std_error=se,
                           exact_value=expected_power_sum_exact(n, s),
                           theory_rate=float(n) ** -s if n else None)

                mean, se = summarize(draws[:, 1])
                yield dict(statistic="max_gap", n=n, trials=params.trials, estimate=mean, std_error=se,
                           exact_value=expected_max_gap_exact(n),
                           theory_rate=math.log(n) / n if n >= 2 else None)
                logging.info(f'Spacing statistics completed for n={n}')

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in spacing experiment')
            raise CustomException(e, sys)

    def initiate_coupon_experiment(self, params, rng: RngStream):
        logging.info(f'Coupon collector experiment started : ell grid {params.ell}')
        try:
            c_values = params.c or [1.5, 2.0, 3.0]
            for index, ell in enumerate(params.ell):
                stats = coupon_stats(ell)
                draws = self._monte_carlo(
                    lambda generator, size, ell=ell: coupon_simulate_batch(generator, size, ell),
                    params.trials, rng.child(index),
                )
                mean, se = summarize(draws)
                yield dict(statistic="coupon_mean", ell=ell, trials=params.trials, estimate=mean, std_error=se,
                           exact_value=stats.mean, theory_rate=stats.mean)

                centred = (draws - mean) ** 2
                variance, variance_se = summarize(centred * draws.size / max(draws.size - 1, 1))
                yield dict(statistic="coupon_variance", ell=ell, trials=params.trials, estimate=variance,
                           std_error=variance_se, theory_rate=stats.variance_bound)

                if ell < 2:
                    continue
                for c in c_values:
                    threshold, bound = coupon_tail_bound(ell, c)
                    exact_tail = coupon_tail_exact(ell, threshold)
                    if exact_tail > bound + 1e-12:
                        raise InvariantViolationError(
                            f"exact tail {exact_tail} exceeds the bound {bound} for ell={ell}, c={c}"
                        )
                    frequency = float(np.mean(draws > threshold))
                    yield dict(statistic="tail_frequency", ell=ell, c=c, n=threshold, trials=params.trials,
                               estimate=frequency,
                               std_error=math.sqrt(frequency * (1.0 - frequency) / draws.size),
                               exact_value=exact_tail, theory_rate=bound)
                logging.info(f'Coupon statistics completed for ell={ell}')

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in coupon experiment')
            raise CustomException(e, sys)
