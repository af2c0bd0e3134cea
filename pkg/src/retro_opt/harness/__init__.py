"""Experiment orchestration: configs, replicated runs, trace files, checks."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiment import CheckReport, run_experiment, self_check, sweep
from .traces import aggregate_dir, aggregate_records, read_trace, write_trace

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "run_experiment",
    "self_check",
    "sweep",
    "CheckReport",
    "aggregate_dir",
    "aggregate_records",
    "read_trace",
    "write_trace",
]
