"""Mesh geometry of node sets in the unit cube and the thinning construction.

No radius is computed for W^s_p in d > 1. The module measures what drives the
rates instead: separation distance, covering radius and their ratio. It also
provides the thinning that turns enough uniform points into a quasi-uniform
set, and the covering radius of uniform samples (the largest empty ball).
"""
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from src.components.core_rand import CoreRandConfig, RadiusEstimate, RngStream, monte_carlo
from src.components.lipschitz import (
    LipschitzConfig,
    check_grid_cells,
    default_grid_cells,
    grid_lq_norm,
)
from src.components.sobolev1d import reciprocal
from src.exception import (
    CustomException,
    InvalidParameterError,
    InvariantViolationError,
    UnprovenRateError,
)
from src.logger import logging
from src.utils import fitted_slope_rows

MESH_TOL = 1e-12


@dataclass
class SobolevMDConfig:
    grid_error_fraction: float = LipschitzConfig.grid_error_fraction
    max_grid_cells: int = LipschitzConfig.max_grid_cells
    chunk_size: int = LipschitzConfig.chunk_size
    block_size: int = 64
    n_jobs: int = CoreRandConfig.n_jobs
    min_trials: int = 100

    def grid_config(self) -> LipschitzConfig:
        return LipschitzConfig(grid_error_fraction=self.grid_error_fraction, max_grid_cells=self.max_grid_cells,
                               chunk_size=self.chunk_size)


@dataclass(frozen=True)
class SobolevParamsMD:
    s: int
    d: int
    p: float
    q: float

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise InvalidParameterError(f"smoothness s must be a positive integer, got {self.s}")
        if self.d < 1:
            raise InvalidParameterError(f"d must be positive, got {self.d}")
        for name, value in (("p", self.p), ("q", self.q)):
            if math.isnan(value) or value < 1.0:
                raise InvalidParameterError(f"{name} must lie in [1, inf], got {value}")
        if not self.s > self.d * reciprocal(self.p):
            raise InvalidParameterError(f"need s > d/p for continuous functions, got s={self.s}, d={self.d}, p={self.p}")

    @property
    def alpha(self) -> float:
        return self.s / self.d - reciprocal(self.p) + reciprocal(self.q)


@dataclass(frozen=True)
class MeshStats:
    separation: float
    covering: float
    mesh_ratio: float
    covering_error_bound: float = 0.0
    duplicates: bool = False


@dataclass(frozen=True)
class ThinningResult:
    indices: np.ndarray
    points: np.ndarray
    m: int


def _as_cube_points(P, d: Optional[int] = None) -> np.ndarray:
    pts = np.asarray(P, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(-1, 1) if d in (None, 1) else pts.reshape(-1, d)
    if d is not None and pts.shape[1] != d:
        raise InvalidParameterError(f"points have dimension {pts.shape[1]}, expected {d}")
    if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
        raise InvalidParameterError("points must lie in [0, 1]^d")
    return pts


def covering_radius_1d(points: np.ndarray) -> float:
    x = np.sort(points.reshape(-1))
    interior = float(np.max(np.diff(x))) / 2.0 if x.size > 1 else 0.0
    return max(float(x[0]), 1.0 - float(x[-1]), interior)


def covering_radius(points, d: Optional[int] = None, grid_cells: Optional[int] = None,
                    config: Optional[SobolevMDConfig] = None):
    """(covering radius, error bound) in the maximum metric of the cube, no wraparound."""
    config = config or SobolevMDConfig()
    pts = _as_cube_points(points, d)
    if pts.shape[0] == 0:
        raise InvalidParameterError("the covering radius needs at least one point")
    d = pts.shape[1]
    if d == 1:
        return covering_radius_1d(pts), 0.0

    grid_config = config.grid_config()
    k = grid_cells or default_grid_cells(pts.shape[0], d, math.inf, grid_config)
    check_grid_cells(k, d, grid_config)
    tree = cKDTree(pts)
    value = grid_lq_norm(lambda centres: tree.query(centres, p=np.inf)[0], k, d, math.inf, config.chunk_size)
    return value, 1.0 / (2.0 * k)


def mesh_stats(P, d: Optional[int] = None, grid_cells: Optional[int] = None,
               config: Optional[SobolevMDConfig] = None) -> MeshStats:
    pts = _as_cube_points(P, d)
    if pts.shape[0] < 2:
        raise InvalidParameterError(f"mesh statistics need at least 2 points, got {pts.shape[0]}")

    distances, _ = cKDTree(pts).query(pts, k=2, p=np.inf)
    separation = float(np.min(distances[:, 1]))
    duplicates = separation == 0.0
    if duplicates:
        logging.warning('Duplicate nodes found : separation distance is 0')

    covering, bound = covering_radius(pts, grid_cells=grid_cells, config=config)
    return MeshStats(
        separation=separation,
        covering=covering,
        mesh_ratio=covering / separation if separation > 0.0 else math.inf,
        covering_error_bound=bound,
        duplicates=duplicates,
    )


def choose_thinning_level(n: int, d: int, alpha: float) -> int:
    """Largest m with n >= (alpha + 1) l log l for l = (3m)^d; 0 when none exists."""
    if alpha <= 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if d < 1:
        raise InvalidParameterError(f"d must be positive, got {d}")
    m = 0
    while True:
        ell = (3 * (m + 1)) ** d
        if n < (alpha + 1.0) * ell * math.log(ell):
            return m
        m += 1


def thin_to_quasi_uniform(P, alpha: float, n: Optional[int] = None, m: Optional[int] = None,
                          d: Optional[int] = None) -> Optional[ThinningResult]:
    """Keep one point from the central small cube of each of the m^d large cubes.

    The cube is split into m^d large cubes and each of these into 3^d small
    ones. On success every central small cube holds a point of P; the lowest
    index is kept. Returns ``None`` when some central cube is empty.
    """
    pts = _as_cube_points(P, d)
    d = pts.shape[1]
    if m is None:
        m = choose_thinning_level(pts.shape[0] if n is None else n, d, alpha)
    elif alpha <= 0:
        raise InvalidParameterError(f"alpha must be positive, got {alpha}")
    if m < 1:
        return None

    small = np.minimum(np.floor(pts * (3 * m)).astype(np.int64), 3 * m - 1)
    central = np.all(small % 3 == 1, axis=1)
    candidates = np.flatnonzero(central)
    if candidates.size == 0:
        return None

    large_flat = np.ravel_multi_index(tuple((small[candidates] // 3).T), (m,) * d)
    # np.unique returns the first occurrence, candidates are ascending
    cells, first = np.unique(large_flat, return_index=True)
    if cells.size < m**d:
        return None
    indices = candidates[first]
    return ThinningResult(indices=indices, points=pts[indices], m=m)


def check_thinning(result: ThinningResult, config: Optional[SobolevMDConfig] = None) -> MeshStats:
    """Mesh statistics of a thinned set; covering and separation must respect 2/(3m)."""
    width = 2.0 / (3.0 * result.m)
    if len(result.indices) < 2:
        covering, _ = covering_radius(result.points, config=config)
        if covering > width + MESH_TOL:
            raise InvariantViolationError(f"thinned covering radius {covering} exceeds {width}")
        return MeshStats(separation=math.inf, covering=covering, mesh_ratio=0.0)

    stats = mesh_stats(result.points, config=config)
    if stats.covering > width + MESH_TOL or stats.separation < width - MESH_TOL:
        raise InvariantViolationError(
            f"thinned set violates the mesh bounds: covering {stats.covering}, separation {stats.separation}, "
            f"2/(3m) = {width}"
        )
    if stats.mesh_ratio > 1.0 + MESH_TOL:
        raise InvariantViolationError(f"thinned set has mesh ratio {stats.mesh_ratio} > 1")
    return stats


def rate_surrogate_md(n: int, params: SobolevParamsMD, random: bool = False) -> float:
    if n < 2:
        raise InvalidParameterError(f"rates need n >= 2, got {n}")
    if not random:
        return n ** (-params.s / params.d + max(reciprocal(params.p) - reciprocal(params.q), 0.0))
    if params.p > params.q:
        raise UnprovenRateError(
            f"the random-information rate for p={params.p} > q={params.q} is a conjecture, not a theorem"
        )
    return (n / math.log(n)) ** -params.alpha


def empirical_gap_witness(n: int, d: int, trials: int, rng: RngStream,
                          config: Optional[SobolevMDConfig] = None) -> RadiusEstimate:
    """Monte Carlo mean covering radius of n uniform points (the largest empty ball)."""
    config = config or SobolevMDConfig()
    if trials < config.min_trials:
        raise InvalidParameterError(f"trials must be at least {config.min_trials}, got {trials}")
    if n < 1 or d < 1:
        raise InvalidParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")

    if d == 1:
        def statistic(generator, size):
            x = np.sort(generator.random((size, n)), axis=1)
            interior = np.max(np.diff(x, axis=1), axis=1) / 2.0 if n > 1 else np.zeros(size)
            return np.maximum(np.maximum(x[:, 0], 1.0 - x[:, -1]), interior)

        return RadiusEstimate.from_samples(monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs))

    grid_config = config.grid_config()
    k = default_grid_cells(n, d, math.inf, grid_config)
    check_grid_cells(k, d, grid_config)

    def statistic(generator, size):
        return np.array([covering_radius(generator.random((n, d)), grid_cells=k, config=config)[0]
                         for _ in range(size)])

    values = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
    return RadiusEstimate.from_samples(values, systematic_error_bound=1.0 / (2.0 * k))


def thinning_success_mc(n: int, d: int, alpha: float, trials: int, rng: RngStream,
                        config: Optional[SobolevMDConfig] = None):
    """(success frequency, m) of thinning n uniform points; every success is checked."""
    config = config or SobolevMDConfig()
    m = choose_thinning_level(n, d, alpha)
    if m < 1:
        return None, 0

    def statistic(generator, size):
        outcome = np.zeros(size)
        for trial in range(size):
            result = thin_to_quasi_uniform(generator.random((n, d)), alpha, m=m)
            if result is not None:
                check_thinning(result, config)
                outcome[trial] = 1.0
        return outcome

    successes = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
    return float(np.mean(successes)), m


def sobolev_params_md(params) -> SobolevParamsMD:
    """Experiment parameters with their defaults: d=1, p=2, q=inf and s=d."""
    d = params.d if params.d is not None else 1
    p = params.p if params.p is not None else 2.0
    q = params.q if params.q is not None else math.inf
    s = params.s if params.s is not None else d
    if float(s) != int(s):
        raise InvalidParameterError(f"smoothness s must be an integer, got {s}")
    return SobolevParamsMD(int(s), d, p, q)


class SobolevMDExperiment:
    def __init__(self, config: Optional[SobolevMDConfig] = None):
        self.sobolev_md_config = config or SobolevMDConfig()

    def initiate_experiment(self, params, rng: RngStream):
        alpha = params.alpha if params.alpha is not None else 1.0
        logging.info(f'Sobolev md experiment started : n grid {params.n_grid}, alpha={alpha}')
        try:
            sobolev_params = sobolev_params_md(params)
            s, d, p, q = sobolev_params.s, sobolev_params.d, sobolev_params.p, sobolev_params.q

            rows = []
            for index, n in enumerate(params.n_grid):
                stream = rng.child(index)
                witness = empirical_gap_witness(n, d, params.trials, stream.child(0), self.sobolev_md_config)
                row = dict(statistic="gap_witness", n=n, d=d, trials=params.trials, estimate=witness.value,
                           std_error=witness.std_error,
                           theory_rate=(math.log(n) / n) ** (1.0 / d) if n >= 2 else None,
                           note=None if witness.systematic_error_bound is None
                           else f"grid_bias_bound={witness.systematic_error_bound!r}")
                rows.append(row)
                yield row

                frequency, m = thinning_success_mc(n, d, alpha, params.trials, stream.child(1),
                                                   self.sobolev_md_config)
                if frequency is not None:
                    ell = (3 * m) ** d
                    yield dict(statistic="thinning_success", n=n, d=d, alpha=alpha, m=m, trials=params.trials,
                               estimate=frequency, std_error=math.sqrt(frequency * (1.0 - frequency) / params.trials),
                               theory_rate=1.0 - ell ** (-alpha), ell=ell)
                else:
                    logging.warning(f'No thinning level exists for n={n}, d={d}, alpha={alpha}')

                if n >= 2:
                    optimal = rate_surrogate_md(n, sobolev_params)
                    yield dict(statistic="rate_optimal", n=n, d=d, p=p, q=q, s=s, estimate=optimal,
                               exact_value=optimal)
                    if p <= q:
                        random = rate_surrogate_md(n, sobolev_params, random=True)
                        yield dict(statistic="rate_random", n=n, d=d, p=p, q=q, s=s, alpha=sobolev_params.alpha,
                                   estimate=random, exact_value=random)
                logging.info(f'Sobolev md statistics completed for n={n}')

            yield from fitted_slope_rows(rows, x_transform="log_n_over_log_n", expected_slope=-1.0 / d, d=d)

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in Sobolev md experiment')
            raise CustomException(e, sys)
