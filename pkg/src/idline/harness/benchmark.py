"""Representation x solver x seed comparison runs."""

from __future__ import annotations

import dataclasses
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..solver import ConvergenceReport, SlidingWindowState, lm_solve
from ..synthetic import ObservationSet, SyntheticWorld, generate_world, initial_state, observe
from .config import RunConfig, load_config
from .metrics import Trajectory, ate_rmse, rpe

SUMMARY_COLUMNS = [
    "representation",
    "solver",
    "runs",
    "converged",
    "ate_median",
    "ate_mean",
    "ate_gauge_median",
    "rpe_trans_median",
    "rpe_rot_median",
    "iter_ms_mean",
    "line_params",
    "normal_dim",
]


@dataclass
class RunReport:
    representation: str
    solver: str
    seed: int
    status: str
    iterations: int
    ate_rmse: float  # after rigid alignment
    ate_rmse_gauge: float  # no alignment; the first pose is the fixed gauge
    rpe_trans_rmse: float
    rpe_rot_rmse: float
    initial_cost: float
    final_cost: float
    cost_trace: list[float]
    phase_times: dict[str, float]
    mean_iteration_time: float
    line_param_count: int
    normal_dim: int
    n_lines: int
    n_points: int
    config: dict = field(default_factory=dict)
    two_step: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("ate_rmse", "ate_rmse_gauge", "rpe_trans_rmse", "rpe_rot_rmse"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")

    def to_record(self) -> dict:
        return dataclasses.asdict(self)

    def metrics(self) -> tuple:
        """The deterministic part of the report (timings excluded)."""
        return (
            self.status,
            self.iterations,
            self.ate_rmse,
            self.ate_rmse_gauge,
            self.rpe_trans_rmse,
            self.rpe_rot_rmse,
            self.final_cost,
            tuple(self.cost_trace),
        )


def make_world(cfg: RunConfig, seed: int) -> tuple[SyntheticWorld, ObservationSet]:
    """World and observations for one seed; the noise stream is seeded with ``seed`` too."""
    world = generate_world(cfg.scene, cfg.trajectory, seed=seed)
    obs = observe(world, dataclasses.replace(cfg.noise, seed=seed))
    return world, obs


def solve_world(
    world: SyntheticWorld,
    obs: ObservationSet,
    cfg: RunConfig,
    representation: str,
    solver: str,
    seed: int,
) -> tuple[SlidingWindowState, ConvergenceReport, RunReport]:
    bc = cfg.benchmark
    frames = range(world.n_frames)
    t0 = time.perf_counter()
    graph, state0 = initial_state(
        world,
        obs,
        frames,
        representation,
        init=bc.init,
        features=bc.features,
        rot_sigma=bc.rot_sigma,
        trans_sigma=bc.trans_sigma,
        seed=seed,
    )
    t1 = time.perf_counter()
    scfg = dataclasses.replace(cfg.solver, two_step_enabled=solver == "two-step")
    state, rep = lm_solve(graph, state0, scfg)
    t2 = time.perf_counter()

    est, truth = Trajectory.from_state(state), Trajectory.from_world(world, state.frame_ids)
    delta = min(bc.rpe_delta, max(len(truth) - 1, 1))
    rt, rr = rpe(est, truth, delta) if len(truth) > 1 else (0.0, 0.0)
    report = RunReport(
        representation=representation,
        solver=solver,
        seed=seed,
        status=rep.status,
        iterations=rep.iterations,
        ate_rmse=ate_rmse(est, truth, align=True),
        ate_rmse_gauge=ate_rmse(est, truth, align=False),
        rpe_trans_rmse=rt,
        rpe_rot_rmse=rr,
        initial_cost=rep.initial_cost,
        final_cost=rep.final_cost,
        cost_trace=list(rep.costs),
        phase_times={
            "initialization": t1 - t0,
            "solve": t2 - t1,
            "line_refit": rep.refit_time,
            "pose_step": rep.pose_step_time,
        },
        mean_iteration_time=rep.mean_iteration_time(),
        line_param_count=state.line_param_count(),
        normal_dim=rep.normal_dim[0] if rep.normal_dim else 0,
        n_lines=len(state.lines) + len(state.ortho_lines),
        n_points=len(state.points),
        config=cfg.snapshot(),
        two_step=[list(t) for t in rep.two_step],
    )
    return state, rep, report


def run_seed(cfg: RunConfig, seed: int) -> list[RunReport]:
    world, obs = make_world(cfg, seed)
    out = []
    for representation in cfg.benchmark.representations:
        for solver in cfg.benchmark.solvers:
            out.append(solve_world(world, obs, cfg, representation, solver, seed)[2])
    return out


def run_benchmark(config: RunConfig | str | Path | None = None, *, workers: int | None = None) -> list[RunReport]:
    """Run every (seed, representation, solver) cell; reports come back in that order.

    Seeds run in separate processes when ``workers > 1``; each cell is
    single-threaded and fully determined by its seed, so the result does not
    depend on the worker count.
    """
    cfg = config if isinstance(config, RunConfig) else load_config(config)
    seeds = list(cfg.benchmark.seeds)
    n = workers if workers is not None else cfg.benchmark.workers
    if n > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=n) as pool:
            batches = list(pool.map(run_seed, [cfg] * len(seeds), seeds))
    else:
        batches = [run_seed(cfg, s) for s in seeds]
    return [r for batch in batches for r in batch]


def summarize(reports: list[RunReport]) -> list[dict]:
    """One row per (representation, solver), in first-seen order."""
    groups: dict[tuple[str, str], list[RunReport]] = {}
    for r in reports:
        groups.setdefault((r.representation, r.solver), []).append(r)
    rows = []
    for (rep, solver), rs in groups.items():
        ate = np.array([r.ate_rmse for r in rs])
        rows.append(
            {
                "representation": rep,
                "solver": solver,
                "runs": len(rs),
                "converged": sum(r.status == "converged" for r in rs),
                "ate_median": float(np.median(ate)),
                "ate_mean": float(np.mean(ate)),
                "ate_gauge_median": float(np.median([r.ate_rmse_gauge for r in rs])),
                "rpe_trans_median": float(np.median([r.rpe_trans_rmse for r in rs])),
                "rpe_rot_median": float(np.median([r.rpe_rot_rmse for r in rs])),
                "iter_ms_mean": 1e3 * float(np.mean([r.mean_iteration_time for r in rs])),
                "line_params": rs[0].line_param_count,
                "normal_dim": rs[0].normal_dim,
            }
        )
    return rows


def _fmt(key: str, v) -> str:
    if isinstance(v, float):
        return f"{v:.2f}" if key == "iter_ms_mean" else f"{v:.3e}"
    return str(v)


def format_table(rows: list[dict]) -> str:
    if not rows:
        return "(no runs)"
    cells = [[_fmt(c, row[c]) for c in SUMMARY_COLUMNS] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(SUMMARY_COLUMNS)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(SUMMARY_COLUMNS, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in cells]
    return "\n".join(lines)
