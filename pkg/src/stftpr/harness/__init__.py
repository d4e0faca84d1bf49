"""Experiment harness: trials, sweeps, result files and the command line."""

from .experiment import (
    METHODS,
    Cell,
    CellSummary,
    ExperimentConfig,
    ExperimentTable,
    MetricError,
    TrialResult,
    add_noise,
    nmse,
    run_experiment,
    run_trial,
    trial_seed,
)
from .io import export_results, load_config, parse_config, read_measurements, write_measurements
from .presets import noise_sweep_config, stride_sweep_config

__all__ = [
    "Cell",
    "CellSummary",
    "ExperimentConfig",
    "ExperimentTable",
    "METHODS",
    "MetricError",
    "TrialResult",
    "add_noise",
    "export_results",
    "stride_sweep_config",
    "noise_sweep_config",
    "load_config",
    "nmse",
    "parse_config",
    "read_measurements",
    "run_experiment",
    "run_trial",
    "trial_seed",
    "write_measurements",
]
