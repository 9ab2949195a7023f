"""Radius of information for periodic Lipschitz functions on [0,1]^d.

For nodes P the radius of L_q-approximation is the L_q norm of the distance
function ``dist(., P)`` in the maximum metric of the torus. In d = 1 this norm
is a closed form in the circular gaps; in d >= 2 it is evaluated on the cell
centres of a regular grid, and since ``dist(., P)`` is 1-Lipschitz the error
is bounded by half a cell width.
"""
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaln

from src.components.core_rand import (
    CoreRandConfig,
    EstimateKind,
    RadiusEstimate,
    RngStream,
    harmonic_number,
    monte_carlo,
)
from src.exception import CustomException, InvalidParameterError, InvariantViolationError, ResourceGuardError
from src.logger import logging
from src.utils import fitted_slope_rows

TORUS_DIAMETER = 0.5


@dataclass
class LipschitzConfig:
    grid_error_fraction: float = 0.05
    max_grid_cells: int = 10**8
    chunk_size: int = 2**16
    block_size: int = 256
    n_jobs: int = CoreRandConfig.n_jobs
    min_trials: int = 100


@dataclass(frozen=True)
class TorusPointSet:
    d: int
    points: np.ndarray

    def __post_init__(self):
        if self.d < 1:
            raise InvalidParameterError(f"d must be positive, got {self.d}")
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.d)
        if not np.all(np.isfinite(pts)) or np.any(pts < 0.0) or np.any(pts > 1.0):
            raise InvalidParameterError("torus points must lie in [0, 1]^d")
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class GridSpec:
    d: int
    m: int

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise InvalidParameterError(f"grid needs d >= 1 and m >= 1, got d={self.d}, m={self.m}")

    @property
    def n(self) -> int:
        return self.m**self.d

    def point_set(self) -> TorusPointSet:
        axis = np.arange(self.m) / self.m
        mesh = np.meshgrid(*([axis] * self.d), indexing="ij")
        return TorusPointSet(self.d, np.stack([g.reshape(-1) for g in mesh], axis=1))


@dataclass(frozen=True)
class LipInftyBracket:
    lower: float
    upper: float
    m1: int
    m2: int


def dist_torus(x, y, d: Optional[int] = None) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape != y.shape or (d is not None and x.size != d):
        raise InvalidParameterError(f"dimension mismatch: {x.size} vs {y.size} (d={d})")
    delta = np.abs(x - y) % 1.0
    return float(np.max(np.minimum(delta, 1.0 - delta))) if x.size else 0.0


def _torus_tree(P: TorusPointSet) -> cKDTree:
    # boxsize wraps every axis; points sitting exactly on 1.0 are folded to 0.0
    return cKDTree(np.mod(P.points, 1.0), boxsize=1.0)


def dist_to_set(x, P: TorusPointSet) -> float:
    """Distance from x to P in the torus maximum metric; 1/2 for an empty set."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != P.d:
        raise InvalidParameterError(f"dimension mismatch: point has {x.size} coordinates, set has d={P.d}")
    if len(P) == 0:
        return TORUS_DIAMETER
    distance, _ = _torus_tree(P).query(np.mod(x, 1.0), p=np.inf)
    return float(distance)


def torus_gaps(points) -> np.ndarray:
    """Circular spacings of points on the 1-torus (the two boundary gaps merge)."""
    pts = np.sort(np.mod(np.asarray(points, dtype=float).reshape(-1), 1.0))
    if pts.size == 0:
        return np.array([1.0])
    return np.append(np.diff(pts), 1.0 - pts[-1] + pts[0])


def _radius_from_torus_gaps(gaps: np.ndarray, q: float) -> np.ndarray:
    """Per-row radius (q < inf: the q-th root is applied) from (trials, n) circular gaps."""
    if math.isinf(q):
        return np.max(gaps, axis=-1) / 2.0
    moment = np.sum(gaps ** (q + 1.0), axis=-1) / (2.0**q * (q + 1.0))
    return moment ** (1.0 / q)


def default_grid_cells(n: int, d: int, q: float, config: LipschitzConfig) -> int:
    """Cells per axis so that the grid error stays below a fraction of the optimal radius."""
    radius_floor = 0.5 * max(n, 1) ** (-1.0 / d)
    if not math.isinf(q):
        radius_floor *= (d / (d + q)) ** (1.0 / q)
    return max(1, math.ceil(1.0 / (2.0 * config.grid_error_fraction * radius_floor)))


def cell_centres(k: int, d: int, start: int, stop: int) -> np.ndarray:
    index = np.arange(start, stop)
    coords = np.empty((index.size, d))
    for axis in range(d - 1, -1, -1):
        index, remainder = np.divmod(index, k)
        coords[:, axis] = (remainder + 0.5) / k
    return coords


def grid_lq_norm(tree_query, k: int, d: int, q: float, chunk_size: int) -> float:
    """L_q norm (L_inf for q = inf) of a distance function sampled at all k^d cell centres."""
    total_cells = k**d
    peak = 0.0
    accumulated = []
    for start in range(0, total_cells, chunk_size):
        values = tree_query(cell_centres(k, d, start, min(start + chunk_size, total_cells)))
        if math.isinf(q):
            peak = max(peak, float(np.max(values)))
        else:
            accumulated.append(math.fsum(values**q))
    if math.isinf(q):
        return peak
    return (math.fsum(accumulated) / total_cells) ** (1.0 / q)


def check_grid_cells(k: int, d: int, config: LipschitzConfig):
    if k**d > config.max_grid_cells:
        logging.warning(f'Grid guard tripped : {k}^{d} cells exceed {config.max_grid_cells}')
        raise ResourceGuardError(f"{k}^{d} grid cells exceed the cap of {config.max_grid_cells}")


def radius_lq(P: TorusPointSet, q: float, grid_cells: Optional[int] = None,
              config: Optional[LipschitzConfig] = None) -> RadiusEstimate:
    config = config or LipschitzConfig()
    if math.isnan(q) or q < 1.0:
        raise InvalidParameterError(f"q must lie in [1, inf], got {q}")
    if len(P) == 0:
        return RadiusEstimate(value=TORUS_DIAMETER, kind=EstimateKind.EXACT)
    if P.d == 1:
        return RadiusEstimate(value=float(_radius_from_torus_gaps(torus_gaps(P.points), q)), kind=EstimateKind.EXACT)

    k = grid_cells or default_grid_cells(len(P), P.d, q, config)
    check_grid_cells(k, P.d, config)
    tree = _torus_tree(P)
    value = grid_lq_norm(lambda centres: tree.query(centres, p=np.inf)[0], k, P.d, q, config.chunk_size)
    return RadiusEstimate(value=value, kind=EstimateKind.GRID_BOUNDED, grid_error_bound=1.0 / (2.0 * k))


def optimal_radius_exact(g: GridSpec, q: float) -> float:
    if math.isnan(q) or q < 1.0:
        raise InvalidParameterError(f"q must lie in [1, inf], got {q}")
    base = 0.5 * g.n ** (-1.0 / g.d)
    if math.isinf(q):
        return base
    return (g.d / (g.d + q)) ** (1.0 / q) * base


def expected_moment_exact(n: int, d: int, q: float) -> float:
    """E[r^q] = 2^-q n! / ((q/d+1)...(q/d+n)) for n uniform nodes, q < inf."""
    if n < 1 or d < 1 or not (1.0 <= q < math.inf):
        raise InvalidParameterError(f"need n >= 1, d >= 1 and finite q >= 1, got n={n}, d={d}, q={q}")
    a = q / d
    return float(np.exp(-q * math.log(2.0) + gammaln(n + 1.0) + gammaln(a + 1.0) - gammaln(a + n + 1.0)))


def moment_limit_constant(d: int, q: float) -> float:
    """lim n^(q/d) E[r^q] = 2^-q Gamma(q/d + 1)."""
    return float(np.exp(-q * math.log(2.0) + gammaln(q / d + 1.0)))


def theory_rate_lip(n: int, d: int, q: float) -> float:
    if n < 2:
        raise InvalidParameterError(f"rates need n >= 2, got {n}")
    if math.isinf(q):
        return (n / math.log(n)) ** (-1.0 / d)
    return n ** (-1.0 / d)


def expected_radius_mc_lip(n: int, d: int, q: float, trials: int, rng: RngStream, moment: bool = False,
                           grid_cells: Optional[int] = None,
                           config: Optional[LipschitzConfig] = None) -> RadiusEstimate:
    """Monte Carlo E[r(N_n)] (or E[r^q] with ``moment=True``) over uniform nodes."""
    config = config or LipschitzConfig()
    if trials < config.min_trials:
        raise InvalidParameterError(f"trials must be at least {config.min_trials}, got {trials}")
    if n < 1 or d < 1:
        raise InvalidParameterError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if moment and math.isinf(q):
        raise InvalidParameterError("moments are only defined for finite q")
    power = q if moment else 1.0

    if d == 1:
        def statistic(generator, size):
            pts = np.sort(generator.random((size, n)), axis=1)
            gaps = np.hstack((np.diff(pts, axis=1), (1.0 - pts[:, -1] + pts[:, 0])[:, None]))
            return _radius_from_torus_gaps(gaps, q) ** power

        values = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
        return RadiusEstimate.from_samples(values)

    k = grid_cells or default_grid_cells(n, d, q, config)
    check_grid_cells(k, d, config)
    half_cell = 1.0 / (2.0 * k)

    def statistic(generator, size):
        out = np.empty(size)
        for trial in range(size):
            tree = cKDTree(generator.random((n, d)), boxsize=1.0)
            out[trial] = grid_lq_norm(lambda centres: tree.query(centres, p=np.inf)[0], k, d, q, config.chunk_size)
        return out

    radii = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
    # |r - r_grid| <= half_cell, so |r^power - r_grid^power| <= (r_grid + half_cell)^power - r_grid^power
    bias = float(np.max((radii + half_cell) ** power - radii**power))
    return RadiusEstimate.from_samples(radii**power, systematic_error_bound=bias)


def lipinfty_bracket(n: int, d: int) -> LipInftyBracket:
    """1/(4 m1) <= E[r] <= 2/m2 for q = inf.

    m1 = min{m : m^d (H_{m^d} - 2) >= n}, m2 = max{m : 2 m^d log(m^d) <= n}.
    """
    if n < 1 or d < 1:
        raise InvalidParameterError(f"the q=inf bracket needs n >= 1 and d >= 1, got n={n}, d={d}")

    m2 = 0
    while 2 * (m2 + 1) ** d * math.log((m2 + 1) ** d) <= n:
        m2 += 1
    if m2 < 1:
        raise InvalidParameterError(f"no admissible m2 for n={n}, d={d}")

    m1 = 1
    while m1**d * (harmonic_number(m1**d) - 2.0) < n:
        m1 += 1

    bracket = LipInftyBracket(lower=1.0 / (4.0 * m1), upper=2.0 / m2, m1=m1, m2=m2)
    if not bracket.lower < bracket.upper:
        raise InvariantViolationError(f"bracket is not ordered: {bracket}")
    return bracket


class LipschitzExperiment:
    def __init__(self, config: Optional[LipschitzConfig] = None):
        self.lipschitz_config = config or LipschitzConfig()

    def initiate_experiment(self, params, rng: RngStream):
        d = params.d if params.d is not None else 1
        q = params.q if params.q is not None else 1.0
        logging.info(f'Lipschitz experiment started : d={d}, q={q}, n grid {params.n_grid}')
        try:
            if params.m is not None:
                grid = GridSpec(d, params.m)
                estimate = radius_lq(grid.point_set(), q, config=self.lipschitz_config)
                exact = optimal_radius_exact(grid, q)
                bound = estimate.grid_error_bound or 0.0
                if abs(estimate.value - exact) > bound + 1e-12:
                    raise InvariantViolationError(
                        f"grid radius {estimate.value} misses the closed form {exact} by more than {bound}"
                    )
                yield dict(statistic="grid_radius", n=grid.n, d=d, q=q, m=params.m, estimate=estimate.value,
                           exact_value=exact, note=f"grid_error_bound={bound!r}")

            rows = []
            for index, n in enumerate(params.n_grid):
                stream = rng.child(index)
                if not math.isinf(q):
                    moment = expected_radius_mc_lip(n, d, q, params.trials, stream.child(0), moment=True,
                                                    config=self.lipschitz_config)
                    exact = expected_moment_exact(n, d, q)
                    yield dict(statistic="moment_q", n=n, d=d, q=q, trials=params.trials, estimate=moment.value,
                               std_error=moment.std_error, exact_value=exact,
                               theory_rate=moment_limit_constant(d, q) * n ** (-q / d),
                               note=_bias_note(moment))

                estimate = expected_radius_mc_lip(n, d, q, params.trials, stream.child(1),
                                                  config=self.lipschitz_config)
                note = _bias_note(estimate)
                if math.isinf(q):
                    note = self._bracket_note(n, d, estimate, note)
                row = dict(statistic="mean_radius", n=n, d=d, q=q, trials=params.trials, estimate=estimate.value,
                           std_error=estimate.std_error,
                           theory_rate=theory_rate_lip(n, d, q) if n >= 2 else None, note=note)
                rows.append(row)
                yield row
                logging.info(f'Lipschitz estimate completed for n={n} : {estimate.value}')

            yield from fitted_slope_rows(rows, x_transform="log_n_over_log_n" if math.isinf(q) else "log_n",
                                         expected_slope=-1.0 / d, d=d, q=q)

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in Lipschitz experiment')
            raise CustomException(e, sys)

    @staticmethod
    def _bracket_note(n, d, estimate, note):
        try:
            bracket = lipinfty_bracket(n, d)
        except InvalidParameterError:
            return note
        slack = 4.0 * estimate.std_error + (estimate.systematic_error_bound or 0.0)
        if estimate.value + slack < bracket.lower or estimate.value - slack > bracket.upper:
            raise InvariantViolationError(
                f"E[r] = {estimate.value} lies outside [{bracket.lower}, {bracket.upper}] for n={n}, d={d}"
            )
        text = f"bracket=[{bracket.lower!r},{bracket.upper!r}]"
        return f"{note} {text}" if note else text


def _bias_note(estimate: RadiusEstimate) -> Optional[str]:
    if estimate.systematic_error_bound is None:
        return None
    return f"grid_bias_bound={estimate.systematic_error_bound!r}"
