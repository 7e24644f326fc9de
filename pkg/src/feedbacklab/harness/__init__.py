"""Experiment plumbing: configuration, runs, acceptance suite and CLI."""
from .config import ExperimentConfig, ResultRecord, scenario_seed, worker_pool
from .experiments import run_experiment

__all__ = ["ExperimentConfig", "ResultRecord", "run_experiment", "scenario_seed", "worker_pool"]
