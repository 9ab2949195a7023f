"""Sections of ellipsoids by the kernel of Gaussian information.

For the semi-axes sigma and an orthonormal kernel basis B the radius is the
circumradius of the section, ``lambda_min(B^T D^-2 B)^(-1/2)`` with
``D = diag(sigma)``. Which of three decay regimes a semi-axis law falls into
decides whether random information is as good as optimal information.
"""
import math
import sys
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import scipy.linalg
from scipy import integrate

from src.components.core_rand import CoreRandConfig, RadiusEstimate, RngStream, monte_carlo
from src.exception import (
    CustomException,
    InvalidParameterError,
    InvariantViolationError,
    NumericalError,
    ResourceGuardError,
)
from src.logger import logging
from src.utils import fitted_slope_rows

SANDWICH_TOL = 1e-10


@dataclass
class EllipsoidConfig:
    dense_limit: int = 2000
    inverse_iteration_tol: float = 1e-10
    max_inverse_iterations: int = 1000
    tail_tolerance: float = 1e-4
    max_dimension: int = 10**6
    block_size: int = 8
    n_jobs: int = CoreRandConfig.n_jobs
    min_trials: int = 20


@dataclass(frozen=True)
class SemiAxes:
    sigma: np.ndarray

    def __post_init__(self):
        sigma = np.asarray(self.sigma, dtype=float).reshape(-1)
        if sigma.size == 0 or not np.all(np.isfinite(sigma)) or np.any(sigma <= 0.0):
            raise InvalidParameterError("semi-axes must be a nonempty list of positive reals")
        if np.any(np.diff(sigma) > 0.0):
            raise InvalidParameterError("semi-axes must be non-increasing")
        object.__setattr__(self, "sigma", sigma)

    @property
    def m(self) -> int:
        return self.sigma.size

    def __getitem__(self, k: int) -> float:
        """sigma_k with 1-based k; 0 beyond the dimension."""
        return float(self.sigma[k - 1]) if k <= self.m else 0.0


@dataclass(frozen=True)
class AxisLaw:
    alpha: float
    beta: float = 0.0
    constant: float = 1.0

    def __post_init__(self):
        if not self.alpha > 0.0:
            raise InvalidParameterError(f"alpha must be positive, got {self.alpha}")
        if not self.constant > 0.0:
            raise InvalidParameterError(f"constant must be positive, got {self.constant}")

    def value(self, k):
        k = np.asarray(k, dtype=float)
        return self.constant * k ** (-self.alpha) * np.log(k + 1.0) ** (-self.beta)

    def semi_axes(self, m: int) -> SemiAxes:
        if m < 1:
            raise InvalidParameterError(f"dimension must be positive, got {m}")
        return SemiAxes(self.value(np.arange(1, m + 1)))

    @property
    def square_summable(self) -> bool:
        return self.alpha > 0.5 or (self.alpha == 0.5 and self.beta > 0.5)


@dataclass(frozen=True)
class ConstantAxes:
    """The sphere: every semi-axis equals ``constant``."""
    constant: float = 1.0
    alpha: float = field(default=0.0, init=False)
    beta: float = field(default=0.0, init=False)

    def __post_init__(self):
        if not self.constant > 0.0:
            raise InvalidParameterError(f"constant must be positive, got {self.constant}")

    def value(self, k):
        return np.full(np.shape(k), self.constant, dtype=float)

    def semi_axes(self, m: int) -> SemiAxes:
        if m < 1:
            raise InvalidParameterError(f"dimension must be positive, got {m}")
        return SemiAxes(np.full(m, self.constant))

    @property
    def square_summable(self) -> bool:
        return False


Law = Union[AxisLaw, ConstantAxes]


class Regime(str, Enum):
    USELESS_BELOW_CM = "useless_below_cm"
    SQRT_LOG_PENALTY = "sqrt_log_penalty"
    OPTIMAL_ORDER = "optimal_order"


@dataclass(frozen=True)
class RegimePrediction:
    regime: Regime
    validity_range: str
    alpha: float
    beta: float

    def threshold_scale(self, m: int) -> float:
        """Upper end of the valid n-range without the unknown absolute constant."""
        if m < 3:
            raise InvalidParameterError(f"threshold scales need m >= 3, got {m}")
        if self.regime is Regime.OPTIMAL_ORDER:
            return float(m)
        if self.regime is Regime.SQRT_LOG_PENALTY:
            return math.sqrt(m)
        log_power = max(2.0 * self.beta, 0.0)
        if self.alpha < 0.5:
            return m ** (1.0 - 2.0 * self.alpha) * math.log(m) ** (-log_power)
        if self.beta < 0.5:
            return math.log(m) ** (1.0 - log_power)
        return math.log(math.log(m))

    def rate(self, sigma: SemiAxes, n: int) -> float:
        if self.regime is Regime.USELESS_BELOW_CM:
            return sigma[1]
        if self.regime is Regime.SQRT_LOG_PENALTY:
            return sigma[n + 1] * math.sqrt(math.log(n + 1.0))
        return sigma[n + 1]


def classify_regime(law: Law) -> RegimePrediction:
    alpha, beta = law.alpha, law.beta
    if alpha > 0.5:
        return RegimePrediction(Regime.OPTIMAL_ORDER, "n < m", alpha, beta)
    if alpha == 0.5 and beta > 0.5:
        return RegimePrediction(Regime.SQRT_LOG_PENALTY, "n < sqrt(m)", alpha, beta)
    return RegimePrediction(Regime.USELESS_BELOW_CM, "n < c_m", alpha, beta)


def _as_sigma(sigma) -> SemiAxes:
    return sigma if isinstance(sigma, SemiAxes) else SemiAxes(sigma)


def kernel_basis(G) -> np.ndarray:
    """Orthonormal basis (m x (m - n)) of ker G from a full QR of G^T.

    Each column is signed so that its first entry of non-negligible size is
    positive.
    """
    G = np.asarray(getattr(G, "entries", G), dtype=float)
    if G.ndim != 2:
        raise InvalidParameterError(f"information must be a matrix, got shape {G.shape}")
    n, m = G.shape
    if n == 0:
        return np.eye(m)
    if n > m:
        raise InvalidParameterError(f"need n <= m, got n={n}, m={m}")
    if not np.all(np.isfinite(G)):
        raise InvalidParameterError("information matrix has non-finite entries")

    Q, R = scipy.linalg.qr(G.T, mode="full")
    diagonal = np.abs(np.diag(R))
    if diagonal.min() <= max(n, m) * np.finfo(float).eps * max(diagonal.max(), 1.0):
        raise NumericalError(f"information matrix is rank deficient (smallest pivot {diagonal.min()!r})")

    B = Q[:, n:]
    if B.shape[1]:
        threshold = 1e-12 * np.max(np.abs(B), axis=0)
        leading = np.argmax(np.abs(B) > threshold, axis=0)
        signs = np.sign(B[leading, np.arange(B.shape[1])])
        B = B * np.where(signs == 0.0, 1.0, signs)
    return B


def _inverse_iteration(M: np.ndarray, config: EllipsoidConfig) -> float:
    try:
        factor = scipy.linalg.cho_factor(M)
    except np.linalg.LinAlgError as e:
        raise NumericalError(f"section matrix is not positive definite: {e}")
    v = np.ones(M.shape[0]) / math.sqrt(M.shape[0])
    eigenvalue = float(v @ M @ v)
    for _ in range(config.max_inverse_iterations):
        w = scipy.linalg.cho_solve(factor, v)
        v = w / np.linalg.norm(w)
        updated = float(v @ M @ v)
        if abs(updated - eigenvalue) <= config.inverse_iteration_tol * updated:
            return updated
        eigenvalue = updated
    raise NumericalError(
        f"inverse iteration did not settle within {config.max_inverse_iterations} steps (last {eigenvalue!r})"
    )


def circumradius(sigma, B, config: Optional[EllipsoidConfig] = None) -> float:
    config = config or EllipsoidConfig()
    sigma = _as_sigma(sigma)
    B = np.asarray(B, dtype=float).reshape(sigma.m, -1)
    k = B.shape[1]
    if k == 0:
        return 0.0

    scaled = B / sigma.sigma[:, None]
    M = scaled.T @ scaled
    if k <= config.dense_limit:
        smallest = float(scipy.linalg.eigh(M, eigvals_only=True, subset_by_index=[0, 0])[0])
    else:
        smallest = _inverse_iteration(M, config)
    if not smallest > 0.0:
        raise NumericalError(f"section matrix lost positive definiteness: lambda_min={smallest!r}, dim={k}")
    return 1.0 / math.sqrt(smallest)


def sandwich_check(sigma, B, config: Optional[EllipsoidConfig] = None):
    """sigma_{n+1} <= r <= sigma_1 for a kernel of dimension m - n."""
    sigma = _as_sigma(sigma)
    B = np.asarray(B, dtype=float).reshape(sigma.m, -1)
    n = sigma.m - B.shape[1]
    r = circumradius(sigma, B, config)
    lower, upper = sigma[n + 1], sigma[1]
    tolerance = SANDWICH_TOL * max(1.0, upper)
    if not lower - tolerance <= r <= upper + tolerance:
        raise InvariantViolationError(f"sandwich violated: sigma_(n+1)={lower!r}, r={r!r}, sigma_1={upper!r}")
    return True, r


def optimal_radius_ell(sigma, n: int) -> float:
    """Minimal radius over all n-dimensional information: sigma_{n+1}."""
    if n < 0:
        raise InvalidParameterError(f"n must be nonnegative, got {n}")
    return _as_sigma(sigma)[n + 1]


def expected_radius_mc_ell(sigma, n: int, trials: int, rng: RngStream,
                           config: Optional[EllipsoidConfig] = None) -> RadiusEstimate:
    config = config or EllipsoidConfig()
    sigma = _as_sigma(sigma)
    if trials < config.min_trials:
        raise InvalidParameterError(f"trials must be at least {config.min_trials}, got {trials}")
    if not 0 <= n <= sigma.m:
        raise InvalidParameterError(f"need 0 <= n <= m, got n={n}, m={sigma.m}")
    if sigma.m > config.max_dimension:
        raise ResourceGuardError(f"dimension {sigma.m} exceeds the cap of {config.max_dimension}")

    def statistic(generator, size):
        radii = np.empty(size)
        for trial in range(size):
            B = kernel_basis(generator.standard_normal((n, sigma.m)))
            radii[trial] = sandwich_check(sigma, B, config)[1]
        return radii

    return RadiusEstimate.from_samples(monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs))


def truncation_dimension(law: Law, config: Optional[EllipsoidConfig] = None) -> Optional[int]:
    """Smallest m with sum_{k>m} sigma_k^2 <= tail_tolerance * sigma_1^2.

    The tail is bounded by the integral of sigma(x)^2 from m to infinity.
    Laws outside l2 have no such m and return ``None``.
    """
    config = config or EllipsoidConfig()
    if not law.square_summable:
        logging.warning(f'Semi-axis law {law} is not square summable : truncation is a modelling caveat')
        return None

    budget = config.tail_tolerance * float(law.value(1.0)) ** 2

    def tail(m):
        value, _ = integrate.quad(lambda x: float(law.value(x)) ** 2, m, np.inf, limit=200)
        return value

    upper = 1
    while tail(upper) > budget:
        upper *= 2
        if upper > config.max_dimension:
            raise ResourceGuardError(f"truncation needs more than {config.max_dimension} dimensions for {law}")
    lower = upper // 2
    while upper - lower > 1:
        middle = (lower + upper) // 2
        if tail(middle) > budget:
            lower = middle
        else:
            upper = middle
    return upper


def dichotomy_experiment(law: Law, m_grid: Sequence[int], n, trials: int, rng: RngStream,
                         config: Optional[EllipsoidConfig] = None) -> pd.DataFrame:
    """E[r] over a grid of truncation dimensions and information sizes.

    Rows: ``mean_radius`` (with the regime's reference rate), ``radius_over_sigma1``
    and, for square-summable laws, ``sqrt_n_radius``.
    """
    config = config or EllipsoidConfig()
    n_values = [int(n)] if np.ndim(n) == 0 else [int(v) for v in n]
    prediction = classify_regime(law)
    caveat = None if law.square_summable else "finite truncation of a law outside l2"

    records = []
    for m_index, m in enumerate(m_grid):
        sigma = law.semi_axes(m)
        for n_index, size in enumerate(n_values):
            if size >= m:
                logging.warning(f'Skipping n={size} >= m={m} : the section is trivial')
                continue
            estimate = expected_radius_mc_ell(sigma, size, trials, rng.child(m_index).child(n_index), config)
            common = dict(m=m, n=size, alpha=law.alpha, beta=law.beta, trials=trials)
            records.append(dict(statistic="mean_radius", estimate=estimate.value, std_error=estimate.std_error,
                                exact_value=optimal_radius_ell(sigma, size),
                                theory_rate=prediction.rate(sigma, size) if size >= 1 else None,
                                note=caveat, **common))
            records.append(dict(statistic="radius_over_sigma1", estimate=estimate.value / sigma[1],
                                std_error=estimate.std_error / sigma[1], note=caveat, **common))
            if law.square_summable:
                root = math.sqrt(size)
                records.append(dict(statistic="sqrt_n_radius", estimate=root * estimate.value,
                                    std_error=root * estimate.std_error, **common))
            logging.info(f'Ellipsoid estimate completed for m={m}, n={size} : {estimate.value}')
    return pd.DataFrame.from_records(records)


class EllipsoidExperiment:
    def __init__(self, config: Optional[EllipsoidConfig] = None):
        self.ellipsoid_config = config or EllipsoidConfig()

    def initiate_experiment(self, params, rng: RngStream):
        alpha = params.alpha if params.alpha is not None else 1.0
        beta = params.beta if params.beta is not None else 0.0
        m_grid = params.m_grid or ([params.m] if params.m is not None else [2000])
        logging.info(f'Ellipsoid experiment started : alpha={alpha}, beta={beta}, m grid {m_grid}')
        try:
            law = ConstantAxes() if alpha == 0.0 else AxisLaw(alpha, beta)
            prediction = classify_regime(law)
            largest = max(m_grid)
            truncation = None
            if law.square_summable:
                try:
                    truncation = truncation_dimension(law, self.ellipsoid_config)
                except ResourceGuardError:
                    logging.warning(f'No truncation dimension within {self.ellipsoid_config.max_dimension}')
            yield dict(statistic="regime", m=largest, alpha=alpha, beta=beta,
                       estimate=prediction.threshold_scale(largest) if largest >= 3 else None,
                       note=f"regime={prediction.regime.value} valid for {prediction.validity_range}"
                            f" truncation_dimension={truncation}")

            table = dichotomy_experiment(law, m_grid, params.n_grid, params.trials, rng, self.ellipsoid_config)
            rows = table.to_dict(orient="records")
            yield from rows

            if prediction.regime is Regime.OPTIMAL_ORDER and beta == 0.0:
                at_largest = [row for row in rows if row["statistic"] == "mean_radius" and row["m"] == largest]
                yield from fitted_slope_rows(at_largest, x_transform="log_n", expected_slope=-alpha,
                                             m=largest, alpha=alpha, beta=beta)

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in ellipsoid experiment')
            raise CustomException(e, sys)
