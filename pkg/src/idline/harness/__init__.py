"""Configuration, metrics, benchmarks, export and the command line."""

from .benchmark import RunReport, run_benchmark, solve_world, summarize
from .config import BenchmarkConfig, RunConfig, load_config, parse_config
from .metrics import Trajectory, ate_rmse, rpe, umeyama_se3

__all__ = [
    "BenchmarkConfig",
    "RunConfig",
    "RunReport",
    "Trajectory",
    "ate_rmse",
    "load_config",
    "parse_config",
    "rpe",
    "run_benchmark",
    "solve_world",
    "summarize",
    "umeyama_se3",
]
