"""Configs, experiment runs, sweeps and reports."""

from .config import ConfigError, ExperimentConfig, dumps, load, loads
from .experiment import EXIT_CHECKS, EXIT_OK, EXIT_RUNTIME, evaluate_check, run_experiment, sweep
from .report import report

__all__ = ["ConfigError", "ExperimentConfig", "dumps", "load", "loads", "EXIT_CHECKS", "EXIT_OK", "EXIT_RUNTIME",
           "evaluate_check", "run_experiment", "sweep", "report"]
