import math
import os
import re
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.components.l1_recovery import DEFAULT_M
from src.components.sobolev_md import sobolev_params_md
from src.exception import InvalidParameterError

EXPERIMENTS = ("spacings", "coupon", "sobolev1d", "integration", "lipschitz", "sobolev_md", "l1", "ellipsoid")
UINT64_MAX = 2**64 - 1

_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*(?::\s*geometric\s*:\s*(\d+(?:\.\d+)?)\s*)?$")


def default_output_dir() -> str:
    return os.environ.get("RINFO_OUTPUT_DIR", "artifacts")


def parse_grid(text: Optional[str]) -> List[int]:
    """Integer grid from ``1,2,5``, ``a..b`` (inclusive) or ``a..b:geometric:k`` (a, ak, ak^2, ... <= b)."""
    if text is None or not text.strip():
        return []
    match = _RANGE.match(text)
    if match is None:
        try:
            return [int(part) for part in text.split(",") if part.strip()]
        except ValueError:
            raise InvalidParameterError(f"cannot parse grid {text!r}")

    start, stop, ratio = int(match.group(1)), int(match.group(2)), match.group(3)
    if ratio is None:
        return list(range(start, stop + 1))
    ratio = float(ratio)
    if start < 1 or ratio <= 1.0:
        raise InvalidParameterError(f"geometric grids need a start >= 1 and a ratio > 1, got {text!r}")
    grid, value = [], float(start)
    while value <= stop * (1.0 + 1e-12):
        if not grid or int(round(value)) != grid[-1]:
            grid.append(int(round(value)))
        value *= ratio
    return grid


def parse_real(text) -> Optional[float]:
    """Real number; ``inf`` is accepted."""
    if text is None:
        return None
    if isinstance(text, str) and text.strip().lower() in ("inf", "infinity", "+inf"):
        return math.inf
    try:
        return float(text)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"cannot parse a real number from {text!r}")


def parse_real_list(text: Optional[str]) -> List[float]:
    if text is None or not str(text).strip():
        return []
    return [parse_real(part) for part in str(text).split(",") if part.strip()]


class ExperimentParameters(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_grid: List[int] = Field(default_factory=list)
    d: Optional[int] = None
    p: Optional[float] = None
    q: Optional[float] = None
    s: Optional[float] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None
    m: Optional[int] = None
    m_grid: List[int] = Field(default_factory=list)
    ell: List[int] = Field(default_factory=list)
    c: List[float] = Field(default_factory=list)
    trials: int = 1000
    restarts: Optional[int] = None
    sparsity: Optional[int] = None
    workers: int = 1

    @field_validator("n_grid", "m_grid", "ell")
    @classmethod
    def nonnegative_grid(cls, value):
        if any(v < 0 for v in value):
            raise ValueError("grid entries must be nonnegative")
        return value

    @field_validator("p", "q")
    @classmethod
    def exponent_range(cls, value):
        if value is not None and (math.isnan(value) or value < 1.0):
            raise ValueError("exponents must lie in [1, inf]")
        return value

    @field_validator("s", "alpha", "beta")
    @classmethod
    def finite_real(cls, value):
        if value is not None and not math.isfinite(value):
            raise ValueError("must be a finite real number")
        return value

    @field_validator("c")
    @classmethod
    def positive_c(cls, value):
        if any(not (v > 0 and math.isfinite(v)) for v in value):
            raise ValueError("tail exponents c must be positive and finite")
        return value

    @field_validator("d", "m", "restarts", "trials", "workers")
    @classmethod
    def positive_count(cls, value):
        if value is not None and value < 1:
            raise ValueError("must be a positive integer")
        return value

    @field_validator("sparsity")
    @classmethod
    def nonnegative_count(cls, value):
        if value is not None and value < 0:
            raise ValueError("must be a nonnegative integer")
        return value


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    experiment: Literal["spacings", "coupon", "sobolev1d", "integration", "lipschitz", "sobolev_md", "l1",
                        "ellipsoid"]
    parameters: ExperimentParameters = Field(default_factory=ExperimentParameters)
    master_seed: int = 0
    output_path: Optional[str] = None
    output_format: Literal["csv", "json"] = "csv"

    @field_validator("master_seed")
    @classmethod
    def seed_range(cls, value):
        if not 0 <= value <= UINT64_MAX:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        return value

    @model_validator(mode="after")
    def check_experiment(self):
        params = self.parameters
        if self.experiment == "coupon":
            if not params.ell or min(params.ell) < 1:
                raise ValueError("the coupon experiment needs a nonempty ell grid of positive entries")
        elif not params.n_grid:
            raise ValueError("the n grid is empty")

        if self.experiment in ("lipschitz", "sobolev_md", "ellipsoid", "l1") and params.n_grid:
            if self.experiment != "ellipsoid" and min(params.n_grid) < 1:
                raise ValueError("n must be positive")
        if self.experiment == "l1":
            if params.m is None:
                params.m = DEFAULT_M
            if max(params.n_grid) > params.m:
                raise ValueError(f"n must not exceed m={params.m}")
            if params.sparsity is not None and params.sparsity > params.m:
                raise ValueError(f"sparsity must not exceed m={params.m}")
        if self.experiment == "sobolev_md":
            try:
                effective = sobolev_params_md(params)
            except InvalidParameterError as e:
                raise ValueError(e.raw_message)
            params.s, params.d = float(effective.s), effective.d
        if self.experiment == "ellipsoid" and params.alpha is not None and params.alpha < 0.0:
            raise ValueError("the decay exponent alpha must be nonnegative")
        if self.experiment in ("sobolev1d", "integration", "lipschitz", "sobolev_md") and params.trials < 100:
            raise ValueError("Monte Carlo radius estimates need at least 100 trials")
        if self.experiment == "ellipsoid" and params.trials < 20:
            raise ValueError("ellipsoid estimates need at least 20 trials")
        if self.output_path is None:
            self.output_path = os.path.join(default_output_dir(), f"{self.experiment}.{self.output_format}")
        return self

    @classmethod
    def build(cls, **kwargs) -> "ExperimentConfig":
        """Validate and convert pydantic errors into usage errors."""
        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise InvalidParameterError(f"invalid experiment configuration: {e}")
