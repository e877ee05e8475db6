"""Experiment harness: configuration, training loop, metrics, checkpoints and experiments."""

from .config import AssistOverrides, ConfigError, ExperimentConfig, format_config, parse_config
from .metrics import METRICS_HEADER, MetricsRow, RunMetrics
from .training import Agent, TrainingResult, evaluate, make_agent, run_episodes, run_training

__all__ = [
    "AssistOverrides", "ConfigError", "ExperimentConfig", "format_config", "parse_config",
    "METRICS_HEADER", "MetricsRow", "RunMetrics",
    "Agent", "TrainingResult", "evaluate", "make_agent", "run_episodes", "run_training",
]
