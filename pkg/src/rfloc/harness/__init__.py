"""Experiment registry, config files, CLI and SVG reports."""
from .config import ConfigError, ExperimentConfig, load_config
from .experiments import REGISTRY, ExperimentReport, run_experiment

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "REGISTRY", "ExperimentReport",
           "run_experiment"]
