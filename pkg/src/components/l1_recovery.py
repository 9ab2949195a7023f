"""Gaussian information for the identity from l1^m to l2^m.

The decoder is basis pursuit. The local radius of zero information is the
largest Euclidean norm on the section of the cross-polytope by ker G. It is
found exactly by vertex enumeration while m - n is small, and bounded from
below by linear-programming ascent otherwise.
"""
import itertools
import math
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd
from scipy.optimize import linprog

from src.components.core_rand import CoreRandConfig, RngStream, monte_carlo, summarize
from src.components.ellipsoid import kernel_basis
from src.exception import (
    CustomException,
    InvalidParameterError,
    InvariantViolationError,
    NumericalError,
    ResourceGuardError,
)
from src.logger import logging

LOWER_BOUND_SLACK = 1e-9
DEFAULT_M = 16


@dataclass
class L1RecoveryConfig:
    max_vertex_candidates: int = 2 * 10**6
    max_section_codim: int = 12
    candidate_chunk: int = 2**16
    restarts: int = 100
    max_ascent_steps: int = 50
    recovery_tol: float = 1e-6
    lp_tolerance: float = 1e-10
    block_size: int = 16
    n_jobs: int = CoreRandConfig.n_jobs


@dataclass(frozen=True)
class InfoMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or not np.all(np.isfinite(entries)):
            raise InvalidParameterError(f"information must be a finite matrix, got shape {entries.shape}")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def m(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class BPSolution:
    x: np.ndarray
    feas_residual: float
    opt_gap_bound: float
    dual: Optional[np.ndarray] = None


def _as_info(G) -> InfoMatrix:
    return G if isinstance(G, InfoMatrix) else InfoMatrix(G)


def gaussian_info(n: int, m: int, rng: RngStream) -> InfoMatrix:
    if n < 0 or m < 1:
        raise InvalidParameterError(f"need n >= 0 and m >= 1, got n={n}, m={m}")
    return InfoMatrix(rng.generator().standard_normal((n, m)))


def random_sparse_unit_vector(m: int, sparsity: int, generator: np.random.Generator) -> np.ndarray:
    """Random support of the given size, random signs, equal magnitudes; zero for sparsity 0."""
    if not 0 <= sparsity <= m:
        raise InvalidParameterError(f"need 0 <= sparsity <= m, got sparsity={sparsity}, m={m}")
    x = np.zeros(m)
    if sparsity:
        support = generator.choice(m, size=sparsity, replace=False)
        x[support] = generator.choice([-1.0, 1.0], size=sparsity) / math.sqrt(sparsity)
    return x


def _polish(G: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Re-solve on the numerical support, then remove any residual by a minimal-norm step."""
    scale = np.max(np.abs(x)) if x.size else 0.0
    support = np.flatnonzero(np.abs(x) > 1e-9 * scale) if scale > 0 else np.array([], dtype=int)
    if 0 < support.size <= G.shape[0]:
        z, *_ = np.linalg.lstsq(G[:, support], y, rcond=None)
        candidate = np.zeros_like(x)
        candidate[support] = z
        if np.linalg.norm(G @ candidate - y) <= np.linalg.norm(G @ x - y):
            x = candidate
    correction, *_ = np.linalg.lstsq(G, y - G @ x, rcond=None)
    return x + correction


def basis_pursuit(G, y, eps_feas: Optional[float] = None, eps_opt: Optional[float] = None,
                  config: Optional[L1RecoveryConfig] = None) -> BPSolution:
    """argmin ||x||_1 subject to Gx = y, with a dual certificate.

    The certificate is a lambda with ||G^T lambda||_inf <= 1; weak duality then
    gives ||x||_1 <= OPT + (||x||_1 - y^T lambda).
    """
    config = config or L1RecoveryConfig()
    G = _as_info(G).entries
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = G.shape
    if y.size != n:
        raise InvalidParameterError(f"measurement has length {y.size}, expected {n}")
    if eps_feas is None:
        eps_feas = 1e-10 * np.linalg.norm(y) + 1e-12
    if not np.any(y):
        return BPSolution(x=np.zeros(m), feas_residual=0.0, opt_gap_bound=0.0, dual=np.zeros(n))

    result = linprog(
        np.ones(2 * m),
        A_eq=np.hstack((G, -G)),
        b_eq=y,
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": config.lp_tolerance,
                 "dual_feasibility_tolerance": config.lp_tolerance},
    )
    if result.status != 0:
        raise NumericalError(f"basis pursuit did not converge: {result.message}")

    x = _polish(G, y, result.x[:m] - result.x[m:])
    residual = float(np.linalg.norm(G @ x - y))
    norm = float(np.sum(np.abs(x)))
    if eps_opt is None:
        eps_opt = 1e-6 * norm + 1e-12

    dual = np.asarray(result.eqlin.marginals, dtype=float)
    dual = dual / max(1.0, float(np.max(np.abs(G.T @ dual))))
    gap = max(norm - float(y @ dual), 0.0)

    if residual > eps_feas or gap > eps_opt:
        raise NumericalError(
            f"basis pursuit missed its tolerances: residual {residual!r} (eps_feas {eps_feas!r}), "
            f"duality gap {gap!r} (eps_opt {eps_opt!r})"
        )
    return BPSolution(x=x, feas_residual=residual, opt_gap_bound=gap, dual=dual)


def _combination_chunks(m: int, size: int, chunk: int):
    combos = itertools.combinations(range(m), size)
    while True:
        block = list(itertools.islice(combos, chunk))
        if not block:
            return
        yield np.array(block, dtype=np.int64).reshape(len(block), size)


def basis_pursuit_vertex_oracle(G, y, config: Optional[L1RecoveryConfig] = None) -> np.ndarray:
    """Exhaustive basic feasible solutions: the best solution of G_S z = y over |S| = n."""
    config = config or L1RecoveryConfig()
    G = _as_info(G).entries
    y = np.asarray(y, dtype=float).reshape(-1)
    n, m = G.shape
    if not np.any(y):
        return np.zeros(m)
    if math.comb(m, n) > config.max_vertex_candidates:
        raise ResourceGuardError(f"C({m}, {n}) supports exceed the cap of {config.max_vertex_candidates}")

    best_norm, best = math.inf, None
    for supports in _combination_chunks(m, n, config.candidate_chunk):
        blocks = np.transpose(G[:, supports], (1, 0, 2))
        invertible = np.abs(np.linalg.det(blocks)) > 1e-12
        if not np.any(invertible):
            continue
        rhs = np.broadcast_to(y, (int(invertible.sum()), n))[..., None]
        z = np.linalg.solve(blocks[invertible], rhs)[..., 0]
        norms = np.sum(np.abs(z), axis=1)
        winner = int(np.argmin(norms))
        if norms[winner] < best_norm:
            best_norm = float(norms[winner])
            best = np.zeros(m)
            best[supports[invertible][winner]] = z[winner]
    if best is None:
        raise NumericalError("no invertible support found for the vertex oracle")
    return best


def exact_enumeration_size(m: int, n: int) -> int:
    """Number of zero sets scanned by radius_zero_exact."""
    if not 0 <= n <= m:
        raise InvalidParameterError(f"need 0 <= n <= m, got n={n}, m={m}")
    return math.comb(m, m - n - 1) if n < m else 0


def _norm_ratio(x: np.ndarray) -> np.ndarray:
    l1 = np.sum(np.abs(x), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(l1 > 0.0, np.linalg.norm(x, axis=-1) / l1, 0.0)


def radius_zero_exact(G, config: Optional[L1RecoveryConfig] = None) -> float:
    """sup{||x||_2 : ||x||_1 <= 1, Gx = 0} by vertex enumeration.

    With k = m - n, a vertex of the section has at least k - 1 zero
    coordinates; every zero set of size k - 1 fixes one kernel direction.
    """
    config = config or L1RecoveryConfig()
    info = _as_info(G)
    n, m = info.n, info.m
    if n == 0:
        return 1.0
    if n >= m:
        return 0.0
    k = m - n
    candidates = exact_enumeration_size(m, n)
    if k > config.max_section_codim or candidates > config.max_vertex_candidates:
        logging.warning(f'Exact section guard tripped : m-n={k}, {candidates} candidate zero sets')
        raise ResourceGuardError(
            f"exact enumeration needs m-n <= {config.max_section_codim} and at most "
            f"{config.max_vertex_candidates} candidates, got m-n={k} and {candidates}"
        )

    B = kernel_basis(info.entries)
    if k == 1:
        return float(_norm_ratio(B[:, 0]))

    best = 0.0
    for zeros in _combination_chunks(m, k - 1, config.candidate_chunk):
        rows = B[zeros]
        _, singular, vh = np.linalg.svd(rows, full_matrices=True)
        regular = singular[:, -1] > 1e-12 * np.maximum(singular[:, 0], 1.0)
        if not np.any(regular):
            continue
        directions = vh[regular, -1, :]
        best = max(best, float(np.max(_norm_ratio(directions @ B.T))))
    return best


def _ascent_step(B: np.ndarray, x: np.ndarray, config: L1RecoveryConfig) -> np.ndarray:
    """argmax <x, z> over the section, as an LP in kernel coordinates c and bounds t >= |Bc|."""
    m, k = B.shape
    cost = np.concatenate((-(B.T @ x), np.zeros(m)))
    identity = np.eye(m)
    A_ub = np.vstack((
        np.hstack((B, -identity)),
        np.hstack((-B, -identity)),
        np.concatenate((np.zeros(k), np.ones(m)))[None, :],
    ))
    b_ub = np.concatenate((np.zeros(2 * m), [1.0]))
    result = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * k + [(0, None)] * m, method="highs",
                     options={"primal_feasibility_tolerance": config.lp_tolerance})
    if result.status != 0:
        raise NumericalError(f"section ascent LP failed: {result.message}")
    return B @ result.x[:k]


def _certify(B: np.ndarray, z: np.ndarray) -> np.ndarray:
    z = B @ (B.T @ z)
    l1 = np.sum(np.abs(z))
    return z / l1 if l1 > 0.0 else z


def radius_zero_lower(G, restarts: Optional[int] = None, rng: Optional[RngStream] = None,
                      config: Optional[L1RecoveryConfig] = None) -> float:
    """A certified lower bound on radius_zero_exact by conditional-gradient ascent.

    Up to half of the starts (at least one) are the kernel projections of the
    coordinate vectors with the best norm ratio. The rest are Gaussian kernel
    vectors drawn from ``rng``. Each LP step moves to the section vertex best
    aligned with the current point.
    """
    config = config or L1RecoveryConfig()
    restarts = config.restarts if restarts is None else restarts
    if restarts < 1:
        raise InvalidParameterError(f"restarts must be positive, got {restarts}")
    info = _as_info(G)
    n, m = info.n, info.m
    if n == 0:
        return 1.0
    if n >= m:
        return 0.0

    B = kernel_basis(info.entries)
    projected = B @ B.T
    order = np.argsort(-_norm_ratio(projected), kind="stable")
    starts = [projected[:, i] for i in order[:max(1, restarts // 2)]]
    if len(starts) < restarts:
        generator = (rng or RngStream(0)).generator()
        coordinates = generator.standard_normal((restarts - len(starts), B.shape[1]))
        starts.extend(coordinates @ B.T)

    best = 0.0
    for start in starts:
        x = _certify(B, start)
        value = float(_norm_ratio(x))
        for _ in range(config.max_ascent_steps):
            z = _certify(B, _ascent_step(B, x, config))
            candidate = float(_norm_ratio(z))
            if candidate <= value + 1e-13:
                break
            x, value = z, candidate
        best = max(best, value)
    return min(best, 1.0)


def kgg_rate(m: int, n: int) -> float:
    """min{1, sqrt(log(1 + m/n) / n)}."""
    if n < 1 or m < 1:
        raise InvalidParameterError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    return min(1.0, math.sqrt(math.log(1.0 + m / n) / n))


def _exact_available(m: int, n: int, config: L1RecoveryConfig) -> bool:
    return m - n <= config.max_section_codim and exact_enumeration_size(m, n) <= config.max_vertex_candidates


def kgg_rate_check(m: int, n_grid, trials: int, rng: RngStream, restarts: Optional[int] = None,
                   config: Optional[L1RecoveryConfig] = None) -> pd.DataFrame:
    """Mean lower (and, when affordable, exact) radius of zero information against the rate."""
    config = config or L1RecoveryConfig()
    records = []
    for index, n in enumerate(n_grid):
        if not 1 <= n <= m:
            raise InvalidParameterError(f"need 1 <= n <= m, got n={n}, m={m}")
        exact = _exact_available(m, n, config)

        def statistic(generator, size, n=n, exact=exact):
            out = np.full((size, 2), np.nan)
            for trial in range(size):
                G = generator.standard_normal((n, m))
                stream = RngStream(int(generator.integers(2**63)))
                out[trial, 0] = radius_zero_lower(G, restarts, stream, config)
                if exact:
                    out[trial, 1] = radius_zero_exact(G, config)
                    if out[trial, 0] > out[trial, 1] + LOWER_BOUND_SLACK:
                        raise InvariantViolationError(
                            f"lower bound {out[trial, 0]!r} exceeds the exact radius {out[trial, 1]!r}"
                        )
            return out

        draws = monte_carlo(statistic, trials, rng.child(index), config.block_size, config.n_jobs)
        rate = kgg_rate(m, n)
        lower, lower_se = summarize(draws[:, 0])
        records.append(dict(statistic="radius_zero_lower", m=m, n=n, trials=trials, estimate=lower,
                            std_error=lower_se, theory_rate=rate, ratio=lower / rate))
        if exact:
            value, value_se = summarize(draws[:, 1])
            records.append(dict(statistic="radius_zero_exact", m=m, n=n, trials=trials, estimate=value,
                                std_error=value_se, theory_rate=rate, ratio=value / rate))
        logging.info(f'Radius of zero information completed for m={m}, n={n} : {lower}')
    return pd.DataFrame.from_records(records)


@dataclass(frozen=True)
class RecoveryOutcome:
    rate: float
    solver_failures: int


def sparse_recovery_outcome(m: int, n: int, sparsity: int, trials: int, rng: RngStream,
                            config: Optional[L1RecoveryConfig] = None) -> RecoveryOutcome:
    """Recovery rate of basis pursuit, with trials where the solver failed counted apart.

    A failed solve is never a success, so it still lowers the rate.
    """
    config = config or L1RecoveryConfig()
    if not 0 <= sparsity <= m:
        raise InvalidParameterError(f"need 0 <= sparsity <= m, got sparsity={sparsity}, m={m}")
    if not 1 <= n <= m:
        raise InvalidParameterError(f"need 1 <= n <= m, got n={n}, m={m}")

    def statistic(generator, size):
        out = np.zeros((size, 2))
        for trial in range(size):
            G = generator.standard_normal((n, m))
            x0 = random_sparse_unit_vector(m, sparsity, generator)
            try:
                solution = basis_pursuit(G, G @ x0, config=config)
            except NumericalError as e:
                logging.warning(f'Basis pursuit failed in a recovery trial : {e}')
                out[trial, 1] = 1.0
                continue
            out[trial, 0] = float(np.linalg.norm(solution.x - x0) <= config.recovery_tol)
        return out

    draws = monte_carlo(statistic, trials, rng, config.block_size, config.n_jobs)
    return RecoveryOutcome(rate=float(np.mean(draws[:, 0])), solver_failures=int(np.sum(draws[:, 1])))


def sparse_recovery_experiment(m: int, n: int, sparsity: int, trials: int, rng: RngStream,
                               config: Optional[L1RecoveryConfig] = None) -> float:
    """Fraction of trials in which basis pursuit recovers a random sparse unit vector."""
    return sparse_recovery_outcome(m, n, sparsity, trials, rng, config).rate


class L1RecoveryExperiment:
    def __init__(self, config: Optional[L1RecoveryConfig] = None):
        self.l1_recovery_config = config or L1RecoveryConfig()

    def initiate_experiment(self, params, rng: RngStream):
        m = params.m if params.m is not None else DEFAULT_M
        sparsity = params.sparsity if params.sparsity is not None else 1
        logging.info(f'l1 recovery experiment started : m={m}, n grid {params.n_grid}')
        try:
            table = kgg_rate_check(m, params.n_grid, params.trials, rng.child(0), params.restarts,
                                   self.l1_recovery_config)
            rows = table.to_dict(orient="records")
            yield from rows

            for index, n in enumerate(params.n_grid):
                outcome = sparse_recovery_outcome(m, n, sparsity, params.trials, rng.child(1).child(index),
                                                  self.l1_recovery_config)
                rate = outcome.rate
                yield dict(statistic="recovery_rate", m=m, n=n, trials=params.trials, estimate=rate,
                           std_error=math.sqrt(rate * (1.0 - rate) / params.trials),
                           note=f"sparsity={sparsity} solver_failures={outcome.solver_failures}")

        except CustomException:
            raise
        except Exception as e:
            logging.info('Exception occured in l1 recovery experiment')
            raise CustomException(e, sys)
