"""Experiment configuration, orchestration, and artifact serialization."""

from .config import ExperimentConfig, parse_config, config_hash, KINDS
from .runner import run_experiment

__all__ = ["ExperimentConfig", "parse_config", "config_hash", "run_experiment", "KINDS"]
