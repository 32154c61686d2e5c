"""Sliding-window point/line bundle adjustment."""

from .lm import (
    ConvergenceReport,
    SolverConfig,
    build_normal_equations,
    evaluate_cost,
    lm_solve,
    refit_lines,
    two_step_solve,
)
from .marginalization import marginalize_frame, marginalize_oldest, remove_frame_visuals
from .problem import Layout, Problem, TotalCost, retract
from .state import (
    WINDOW_SIZE,
    FactorGraph,
    LineFactor,
    LineFeature,
    MarginalPrior,
    PointFactor,
    PointFeature,
    SlidingWindowState,
    prior_residual,
)
from .window import compose_odometry, drop_frame, second_newest_policy, window_invariants_hold

__all__ = [
    "ConvergenceReport",
    "FactorGraph",
    "Layout",
    "LineFactor",
    "LineFeature",
    "MarginalPrior",
    "PointFactor",
    "PointFeature",
    "Problem",
    "SlidingWindowState",
    "SolverConfig",
    "TotalCost",
    "WINDOW_SIZE",
    "build_normal_equations",
    "compose_odometry",
    "drop_frame",
    "evaluate_cost",
    "lm_solve",
    "marginalize_frame",
    "marginalize_oldest",
    "prior_residual",
    "refit_lines",
    "remove_frame_visuals",
    "retract",
    "second_newest_policy",
    "two_step_solve",
    "window_invariants_hold",
]
