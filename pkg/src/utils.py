import math
import os
import sys
from dataclasses import dataclass

import dill
import numpy as np
from sklearn.linear_model import LinearRegression
from sklearn.metrics import r2_score

from src.exception import CustomException, InvalidParameterError
from src.logger import logging

X_TRANSFORMS = ("log_n", "log_n_over_log_n")


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r_squared: float
    x_transform: str


def save_object(file_path, obj):
    try:
        dir_path = os.path.dirname(file_path)

        os.makedirs(dir_path or ".", exist_ok=True)

        with open(file_path, "wb") as file_obj:
            dill.dump(obj, file_obj)

    except Exception as e:
        raise CustomException(e, sys)


def load_object(file_path):
    try:
        with open(file_path, 'rb') as file_obj:
            return dill.load(file_obj)
    except Exception as e:
        logging.info('Exception Occured in load_object function utils')
        raise CustomException(e, sys)


def transform_n(n, x_transform: str) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    if x_transform == "log_n":
        return np.log(n)
    if x_transform == "log_n_over_log_n":
        return np.log(n / np.log(n))
    raise InvalidParameterError(f"unknown x_transform {x_transform!r}, expected one of {X_TRANSFORMS}")


def fit_rate(rows, x_transform: str = "log_n") -> RateFit:
    """Least squares of log(estimate) against the transformed log n.

    ``rows`` is an iterable of mappings with ``n`` and ``estimate`` keys (or a
    DataFrame with those columns).
    """
    if hasattr(rows, "to_dict"):
        rows = rows.to_dict(orient="records")
    rows = list(rows)
    if len(rows) < 4:
        raise InvalidParameterError(f"a rate fit needs at least 4 grid points, got {len(rows)}")

    n = np.array([row["n"] for row in rows], dtype=float)
    estimate = np.array([row["estimate"] for row in rows], dtype=float)
    if np.any(~np.isfinite(estimate)) or np.any(estimate <= 0.0):
        raise InvalidParameterError("rate fits need positive finite estimates")
    if x_transform == "log_n_over_log_n" and np.any(n < 2):
        raise InvalidParameterError("log(n/log n) needs n >= 2")

    x = transform_n(n, x_transform).reshape(-1, 1)
    y = np.log(estimate)
    model = LinearRegression().fit(x, y)
    r_squared = float(np.clip(r2_score(y, model.predict(x)), 0.0, 1.0)) if np.ptp(y) > 0 else 1.0
    return RateFit(
        slope=float(model.coef_[0]),
        intercept=float(model.intercept_),
        r_squared=r_squared,
        x_transform=x_transform,
    )


def fitted_slope_rows(rows, x_transform: str, expected_slope: float, **echo):
    """A ``fitted_slope`` row when the grid has at least four usable points."""
    usable = [row for row in rows
              if row["n"] >= 2 and row["estimate"] is not None and math.isfinite(row["estimate"])
              and row["estimate"] > 0.0]
    if len(usable) < 4:
        return
    fit = fit_rate(usable, x_transform)
    logging.info(f'Rate fit : slope {fit.slope}, r2 {fit.r_squared}, expected {expected_slope}')
    yield dict(statistic="fitted_slope", estimate=fit.slope, exact_value=expected_slope,
               note=f"x={fit.x_transform} intercept={fit.intercept!r} r2={fit.r_squared!r}", **echo)
