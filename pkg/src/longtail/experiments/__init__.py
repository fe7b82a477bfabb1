"""Experiment harness: surrogate benchmark, sweep runner, report emission."""

from .benchmark import BenchmarkConfig, generate_sim_pool, make_benchmark
from .configfile import load_config_file, parse_config
from .report import emit_report
from .runner import ExperimentConfig, SweepReport, run_experiment
from .workspace import Workspace

__all__ = [
    "BenchmarkConfig",
    "ExperimentConfig",
    "SweepReport",
    "Workspace",
    "emit_report",
    "generate_sim_pool",
    "load_config_file",
    "make_benchmark",
    "parse_config",
    "run_experiment",
]
