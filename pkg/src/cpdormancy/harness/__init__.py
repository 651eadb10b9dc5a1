"""Configuration, orchestration and command-line entry point for experiments."""
from .config import KINDS, ExperimentConfig, defaults, load, validate
from .experiments import Report, collect, run_experiment, summarize, sweep

__all__ = ["KINDS", "ExperimentConfig", "Report", "collect", "defaults", "load", "run_experiment",
           "summarize", "sweep", "validate"]
