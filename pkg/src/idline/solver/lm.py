"""Levenberg-Marquardt and two-step (line refit / pose step) window solvers."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import GeometryError
from ..initialization import MIN_PARALLAX
from .problem import Layout, Problem, TotalCost, retract
from .state import FactorGraph, SlidingWindowState


@dataclass
class SolverConfig:
    max_iterations: int = 50
    lm_initial_damping: float = 1e-4
    lm_damping_up: float = 10.0
    lm_damping_down: float = 10.0
    lm_damping_min: float = 1e-12
    lm_damping_max: float = 1e8
    convergence_tol_cost: float = 1e-10
    convergence_tol_step: float = 1e-10
    cauchy_scale: float = 1.0
    two_step_enabled: bool = False
    two_step_max_outer: int = 100
    optimize_extrinsic: bool = False
    refit_iterations: int = 10
    window_size: int = 10

    def __post_init__(self):
        for name in (
            "max_iterations",
            "lm_initial_damping",
            "lm_damping_up",
            "lm_damping_down",
            "convergence_tol_cost",
            "convergence_tol_step",
            "cauchy_scale",
            "two_step_max_outer",
            "window_size",
        ):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lm_damping_up <= 1 or self.lm_damping_down <= 1:
            raise ValueError("damping factors must exceed 1")
        if self.convergence_tol_cost >= 1 or self.convergence_tol_step >= 1:
            raise ValueError("tolerances must be below 1")


@dataclass
class ConvergenceReport:
    status: str = "running"  # converged | max_iterations | diverged
    iterations: int = 0
    initial_cost: float = float("nan")
    final_cost: float = float("nan")
    costs: list[float] = field(default_factory=list)  # accepted cost sequence, starts at initial
    damping: list[float] = field(default_factory=list)
    iteration_times: list[float] = field(default_factory=list)
    rejected_steps: int = 0
    normal_dim: list[int] = field(default_factory=list)
    # two-step only: (r_k, r_k+1^[1], r_k+1) per outer iteration
    two_step: list[tuple[float, float, float]] = field(default_factory=list)
    refit_time: float = 0.0
    pose_step_time: float = 0.0

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def mean_iteration_time(self) -> float:
        return float(np.mean(self.iteration_times)) if self.iteration_times else 0.0

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["two_step"] = [list(t) for t in self.two_step]
        return rec


def _problem(graph, state, config, kernels=None) -> Problem:
    return Problem(graph, state, cauchy_scale=config.cauchy_scale, kernels=kernels)


def evaluate_cost(
    graph: FactorGraph, state: SlidingWindowState, config: SolverConfig | None = None
) -> TotalCost:
    return _problem(graph, state, config or SolverConfig()).cost(state)


def build_normal_equations(
    graph: FactorGraph,
    state: SlidingWindowState,
    config: SolverConfig | None = None,
    *,
    include_lines: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Dense ``(H, b)`` over the optimized variables, first pose frozen absent a prior."""
    config = config or SolverConfig()
    layout = Layout(state, optimize_extrinsic=config.optimize_extrinsic, include_lines=include_lines)
    _, H, b = _problem(graph, state, config).linearize(state, layout)
    return H, b


class _LMStepper:
    """One accepted LM step at a time, keeping the damping between calls."""

    def __init__(self, problem: Problem, config: SolverConfig, report: ConvergenceReport):
        self.problem = problem
        self.config = config
        self.report = report
        self.damping = config.lm_initial_damping

    def step(self, state: SlidingWindowState, cost: TotalCost, layout: Layout):
        """Return ``(state, cost, step_norm, outcome)``; outcome is accepted/stalled/diverged."""
        cfg = self.config
        _, H, b = self.problem.linearize(state, layout)
        self.report.normal_dim.append(layout.dim)
        if layout.dim == 0:
            return state, cost, 0.0, "stalled"
        if not (np.all(np.isfinite(H)) and np.all(np.isfinite(b))):
            return state, cost, 0.0, "diverged"
        eye = np.eye(layout.dim)
        while True:
            dx = None
            try:
                dx = cho_solve(cho_factor(H + self.damping * eye), b)
            except (LinAlgError, ValueError):
                pass
            if dx is not None and np.all(np.isfinite(dx)):
                try:
                    cand = retract(state, layout, dx)
                    new = self.problem.cost(cand)
                except GeometryError:
                    new = None
                if new is not None and new.inactive <= cost.inactive and new.total < cost.total:
                    self.damping = max(self.damping / cfg.lm_damping_down, cfg.lm_damping_min)
                    return cand, new, float(np.linalg.norm(dx)), "accepted"
            elif dx is None and self.damping >= cfg.lm_damping_max:
                return state, cost, 0.0, "diverged"
            self.report.rejected_steps += 1
            if self.damping >= cfg.lm_damping_max:
                return state, cost, 0.0, "stalled"
            self.damping = min(self.damping * cfg.lm_damping_up, cfg.lm_damping_max)


def _state_scale(state: SlidingWindowState) -> float:
    return float(np.sqrt(sum(np.sum(p.t**2) for p in state.poses.values())) + 1.0)


def _converged(cfg: SolverConfig, old: float, new: float, step: float, scale: float) -> bool:
    if new <= 1e-30:
        return True
    if old - new <= cfg.convergence_tol_cost * old:
        return True
    return step <= cfg.convergence_tol_step * scale


def lm_solve(
    graph: FactorGraph,
    state: SlidingWindowState,
    config: SolverConfig | None = None,
    *,
    kernels=None,
) -> tuple[SlidingWindowState, ConvergenceReport]:
    """Joint LM over poses, points and lines.

    Each iteration is one accepted step (the damping is raised until the
    cost decreases).  When no decrease is found before the damping ceiling
    the current state is a local minimum and the solve reports converged.
    """
    config = config or SolverConfig()
    if config.two_step_enabled:
        return two_step_solve(graph, state, config, kernels=kernels)
    report = ConvergenceReport()
    problem = _problem(graph, state, config, kernels)
    layout = Layout(state, optimize_extrinsic=config.optimize_extrinsic)
    cost = problem.cost(state)
    report.initial_cost = cost.total
    report.costs.append(cost.total)
    if not np.isfinite(cost.total):
        report.status = "diverged"
        report.final_cost = cost.total
        return state, report
    stepper = _LMStepper(problem, config, report)
    current = state
    scale = _state_scale(state)
    report.status = "max_iterations"
    for _ in range(config.max_iterations):
        t0 = time.perf_counter()
        new_state, new_cost, step, outcome = stepper.step(current, cost, layout)
        report.iteration_times.append(time.perf_counter() - t0)
        report.damping.append(stepper.damping)
        if outcome != "accepted":
            report.status = outcome
            if outcome == "diverged":
                current = state
            break
        report.iterations += 1
        report.costs.append(new_cost.total)
        done = _converged(config, cost.total, new_cost.total, step, scale)
        current, cost = new_state, new_cost
        if done:
            report.status = "converged"
            break
    if report.status == "stalled":
        # no decrease possible even at the damping ceiling: a local minimum
        report.status = "converged"
    report.final_cost = problem.cost(current).total
    return current, report


# --- two-step -----------------------------------------------------------------


def _set_line_params(state: SlidingWindowState, ids, params: np.ndarray) -> SlidingWindowState:
    out = state.copy()
    for fid, p in zip(ids, params):
        if fid in out.ortho_lines:
            continue
        out.lines[fid].line = out.lines[fid].line.with_depths(p[0], p[1])
    return out


def refit_lines(problem: Problem, state: SlidingWindowState, config: SolverConfig) -> SlidingWindowState:
    """Step 1: re-fit every line at fixed poses without raising any line's cost.

    Anchored lines are seeded by the plane-distance least squares, then all
    lines get a few damped Gauss-Newton iterations on their own reprojection
    cost.  Lines are independent once poses are fixed, so each candidate is
    accepted or rejected per line and the total cost can only go down.
    """
    ids, cost, _, _, bad = problem.line_blocks(state)
    if not len(ids):
        return state

    if state.lines:
        params, ok = problem.plane_seeds(state, MIN_PARALLAX)
        if np.any(ok):
            cur = np.array([(state.lines[f].line.lambda_s, state.lines[f].line.lambda_e) for f in ids])
            cand = _set_line_params(state, ids, np.where(ok[:, None], params, cur))
            _, c_cost, _, _, c_bad = problem.line_blocks(cand)
            keep = ok & (c_cost < cost) & (c_bad <= bad)
            if np.any(keep):
                state = _merge_lines(state, cand, ids, keep)

    damping = np.full(len(ids), config.lm_initial_damping)
    for _ in range(config.refit_iterations):
        ids, cost, H, b, bad = problem.line_blocks(state)
        k = H.shape[1]
        steps = np.linalg.solve(H + damping[:, None, None] * np.eye(k), b[:, :, None])[:, :, 0]
        cand = _retract_lines(state, ids, steps)
        if cand is None:
            damping *= config.lm_damping_up
            continue
        cand_state, valid = cand
        _, c_cost, _, _, c_bad = problem.line_blocks(cand_state)
        keep = valid & (c_cost < cost) & (c_bad <= bad)
        if not np.any(keep):
            break
        state = _merge_lines(state, cand_state, ids, keep)
        damping = np.where(
            keep,
            np.maximum(damping / config.lm_damping_down, config.lm_damping_min),
            np.minimum(damping * config.lm_damping_up, config.lm_damping_max),
        )
    return state


def _retract_lines(state, ids, steps):
    """Apply per-line steps; invalid lines keep their old value and are flagged."""
    out = state.copy()
    valid = np.ones(len(ids), dtype=bool)
    for k, (fid, dx) in enumerate(zip(ids, steps)):
        try:
            if fid in out.ortho_lines:
                out.ortho_lines[fid] = state.ortho_lines[fid].plus(dx)
            else:
                ln = state.lines[fid].line
                out.lines[fid].line = ln.with_depths(ln.lambda_s + dx[0], ln.lambda_e + dx[1])
        except GeometryError:
            valid[k] = False
    return out, valid


def _merge_lines(old, new, ids, keep):
    out = old.copy()
    for fid, k in zip(ids, keep):
        if not k:
            continue
        if fid in new.ortho_lines:
            out.ortho_lines[fid] = new.ortho_lines[fid]
        else:
            out.lines[fid].line = new.lines[fid].line
    return out


def two_step_solve(
    graph: FactorGraph,
    state: SlidingWindowState,
    config: SolverConfig | None = None,
    *,
    kernels=None,
) -> tuple[SlidingWindowState, ConvergenceReport]:
    """Alternate a per-line refit at fixed poses with one LM step over the rest.

    The pose step's normal equations exclude every line column.  The report
    records ``(r_k, r_k+1^[1], r_k+1)`` for each outer iteration.
    """
    config = config or SolverConfig()
    report = ConvergenceReport()
    problem = _problem(graph, state, config, kernels)
    layout = Layout(state, optimize_extrinsic=config.optimize_extrinsic, include_lines=False)
    cost = problem.cost(state)
    report.initial_cost = cost.total
    report.costs.append(cost.total)
    if not np.isfinite(cost.total):
        report.status = "diverged"
        report.final_cost = cost.total
        return state, report
    stepper = _LMStepper(problem, config, report)
    current = state
    scale = _state_scale(state)
    report.status = "max_iterations"
    for _ in range(config.two_step_max_outer):
        t0 = time.perf_counter()
        refit = refit_lines(problem, current, config)
        cost_1 = problem.cost(refit)
        t1 = time.perf_counter()
        new_state, new_cost, step, outcome = stepper.step(refit, cost_1, layout)
        t2 = time.perf_counter()
        report.refit_time += t1 - t0
        report.pose_step_time += t2 - t1
        report.iteration_times.append(t2 - t0)
        report.damping.append(stepper.damping)
        if outcome == "diverged":
            report.status = "diverged"
            current = state
            break
        if outcome == "stalled":
            if cost_1.total < cost.total:
                report.two_step.append((cost.total, cost_1.total, cost_1.total))
                report.iterations += 1
                report.costs.append(cost_1.total)
                current = refit
            report.status = "converged"
            break
        report.two_step.append((cost.total, cost_1.total, new_cost.total))
        report.iterations += 1
        report.costs.append(new_cost.total)
        done = _converged(config, cost.total, new_cost.total, step, scale)
        current, cost = new_state, new_cost
        if done:
            report.status = "converged"
            break
    report.final_cost = problem.cost(current).total
    return current, report

