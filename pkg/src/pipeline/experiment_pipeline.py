import json
import math
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from src.components.core_rand import CoreRandConfig, CoreRandExperiment, RngStream
from src.components.ellipsoid import EllipsoidConfig, EllipsoidExperiment
from src.components.l1_recovery import L1RecoveryConfig, L1RecoveryExperiment
from src.components.lipschitz import LipschitzConfig, LipschitzExperiment
from src.components.sobolev1d import Sobolev1DConfig, Sobolev1DExperiment
from src.components.sobolev_md import SobolevMDConfig, SobolevMDExperiment
from src.exception import CustomException
from src.logger import logging
from src.pipeline.experiment_config import EXPERIMENTS, ExperimentConfig
from src.utils import save_object

COLUMNS = [
    "experiment", "statistic", "n", "d", "p", "q", "s", "alpha", "beta", "m", "trials", "seed",
    "estimate", "std_error", "exact_value", "theory_rate", "ratio", "ell", "c", "note",
]
ECHOED = ("d", "p", "q", "s", "alpha", "beta", "m", "trials")
EXIT_OK = 0


@dataclass
class ExperimentPipelineConfig:
    float_format: str = "%.17g"
    snapshot_path: Optional[str] = None


def _missing(value) -> bool:
    return value is None or (isinstance(value, float) and math.isnan(value))


def _ratio(row) -> Optional[float]:
    estimate = row.get("estimate")
    if _missing(estimate):
        return None
    for key in ("theory_rate", "exact_value"):
        reference = row.get(key)
        if not _missing(reference) and reference != 0:
            return float(estimate) / float(reference)
    return None


def assemble_row(config: ExperimentConfig, row: dict) -> dict:
    """Complete a component row: every column present, parameters and seed echoed."""
    params = config.parameters
    full = {column: row.get(column) for column in COLUMNS}
    full["experiment"] = config.experiment
    full["seed"] = config.master_seed
    for key in ECHOED:
        if _missing(full[key]):
            full[key] = getattr(params, key)
    if _missing(full["ratio"]):
        full["ratio"] = _ratio(full)
    return full


def _json_value(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def write_rows(rows, path: str, output_format: str, float_format: str = "%.17g"):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    frame = pd.DataFrame.from_records(rows, columns=COLUMNS)
    if output_format == "csv":
        frame.to_csv(path, index=False, float_format=float_format, na_rep="")
    else:
        records = [{key: _json_value(value) for key, value in record.items()}
                   for record in frame.to_dict(orient="records")]
        with open(path, "w") as file_obj:
            json.dump(records, file_obj, indent=2, allow_nan=False)
    logging.info(f'{len(rows)} rows written to {path}')
    return frame


class ExperimentPipeline:
    def __init__(self, config: Optional[ExperimentPipelineConfig] = None):
        self.pipeline_config = config or ExperimentPipelineConfig()

    def _rows(self, config: ExperimentConfig, rng: RngStream):
        params = config.parameters
        workers = params.workers
        experiment = config.experiment
        if experiment == "spacings":
            return CoreRandExperiment(CoreRandConfig(n_jobs=workers)).initiate_spacing_experiment(params, rng)
        if experiment == "coupon":
            return CoreRandExperiment(CoreRandConfig(n_jobs=workers)).initiate_coupon_experiment(params, rng)
        if experiment in ("sobolev1d", "integration"):
            return Sobolev1DExperiment(Sobolev1DConfig(n_jobs=workers)).initiate_experiment(
                params, rng, integration=experiment == "integration"
            )
        if experiment == "lipschitz":
            return LipschitzExperiment(LipschitzConfig(n_jobs=workers)).initiate_experiment(params, rng)
        if experiment == "sobolev_md":
            return SobolevMDExperiment(SobolevMDConfig(n_jobs=workers)).initiate_experiment(params, rng)
        if experiment == "l1":
            return L1RecoveryExperiment(L1RecoveryConfig(n_jobs=workers)).initiate_experiment(params, rng)
        return EllipsoidExperiment(EllipsoidConfig(n_jobs=workers)).initiate_experiment(params, rng)

    def run(self, config: ExperimentConfig) -> int:
        """Run one experiment and write its rows; returns the process exit status.

        Rows produced before a failure are still written.
        """
        logging.info(f'Experiment pipeline started : {config.experiment}, seed {config.master_seed}')
        rng = RngStream(config.master_seed, stream_index=EXPERIMENTS.index(config.experiment))
        rows = []
        status = EXIT_OK
        try:
            for row in self._rows(config, rng):
                rows.append(assemble_row(config, row))
        except CustomException as e:
            logging.info(f'Experiment stopped : {e}')
            print(e.error_message, file=sys.stderr)
            status = e.exit_code
        except Exception as e:
            wrapped = CustomException(e, sys)
            logging.info(f'Exception occured in experiment pipeline : {wrapped}')
            print(wrapped.error_message, file=sys.stderr)
            status = wrapped.exit_code

        frame = write_rows(rows, config.output_path, config.output_format, self.pipeline_config.float_format)
        if self.pipeline_config.snapshot_path:
            save_object(self.pipeline_config.snapshot_path,
                        {"config": config.model_dump(), "rows": frame, "status": status})
        logging.info(f'Experiment pipeline finished with status {status}')
        return status
