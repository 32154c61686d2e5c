"""Command line entry point: ``idline {generate,solve,benchmark,check-jacobians}``.

Exit codes: 0 success, 1 solver diverged (or Jacobian check failed), 2 bad
configuration or input file.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import json
import sys
from pathlib import Path

from ..errors import ConfigError
from ..synthetic import REPRESENTATIONS, observe
from .benchmark import SUMMARY_COLUMNS, format_table, make_world, run_benchmark, solve_world, summarize
from .config import SOLVERS, load_config
from .io import read_world, write_csv, write_jsonl, write_tum, write_world
from .metrics import Trajectory

EXIT_OK, EXIT_DIVERGED, EXIT_CONFIG = 0, 1, 2
JACOBIAN_TOL = 1e-5


@contextlib.contextmanager
def _output(path: str | None):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as f:
            yield f


def _cmd_generate(args, cfg) -> int:
    seed = args.seed if args.seed is not None else cfg.noise.seed
    world, obs = make_world(cfg, seed)
    if args.out is None:
        raise ConfigError("generate needs --out")
    write_world(args.out, world, None if args.no_observations else obs)
    n_obs = sum(len(v) for v in obs.lines.values())
    print(
        f"wrote {args.out}: {world.n_frames} frames, {len(world.points)} points, "
        f"{len(world.lines)} lines, {n_obs} line observations"
    )
    return EXIT_OK


def _cmd_solve(args, cfg) -> int:
    world, obs = read_world(args.world)
    seed = args.seed if args.seed is not None else world.seed
    if obs is None:
        obs = observe(world, dataclasses.replace(cfg.noise, seed=seed))
    state, conv, report = solve_world(world, obs, cfg, args.representation, args.solver, seed)
    with _output(args.out) as f:
        if args.format == "machine":
            write_jsonl(f, [report.to_record()])
        else:
            rows = [
                ("representation", report.representation),
                ("solver", report.solver),
                ("status", report.status),
                ("iterations", report.iterations),
                ("cost", f"{report.initial_cost:.6e} -> {report.final_cost:.6e}"),
                ("ATE rmse (aligned)", f"{report.ate_rmse:.6e}"),
                ("ATE rmse (gauge)", f"{report.ate_rmse_gauge:.6e}"),
                ("RPE trans / rot", f"{report.rpe_trans_rmse:.6e} / {report.rpe_rot_rmse:.6e}"),
                ("line params", report.line_param_count),
                ("normal dim", report.normal_dim),
                ("ms / iteration", f"{1e3 * report.mean_iteration_time:.2f}"),
            ]
            for k, v in rows:
                f.write(f"{k:<20} {v}\n")
    if args.trajectory:
        with open(args.trajectory, "w") as f:
            write_tum(f, Trajectory.from_state(state))
    return EXIT_DIVERGED if conv.diverged else EXIT_OK


def _cmd_benchmark(args, cfg) -> int:
    if args.seed is not None:
        cfg.benchmark.seeds = [args.seed]
    if args.representation:
        cfg.benchmark.representations = [args.representation]
    if args.solver:
        cfg.benchmark.solvers = [args.solver]
    reports = run_benchmark(cfg, workers=args.workers)
    rows = summarize(reports)
    with _output(args.out) as f:
        if args.format == "machine":
            write_jsonl(f, [r.to_record() for r in reports])
        else:
            f.write(format_table(rows) + "\n")
    if args.summary:
        with open(args.summary, "w") as f:
            write_csv(f, rows, SUMMARY_COLUMNS)
    return EXIT_DIVERGED if any(r.status == "diverged" for r in reports) else EXIT_OK


def _cmd_check_jacobians(args, cfg) -> int:
    from ..fdcheck import run_jacobian_suite

    seed = args.seed if args.seed is not None else 0
    report = run_jacobian_suite(args.configs, seed=seed)
    ok = report.worst < JACOBIAN_TOL
    with _output(args.out) as f:
        if args.format == "machine":
            rec = {"configs": report.n_configs, "worst": report.worst, "ok": ok, "blocks": report.max_error}
            f.write(json.dumps(rec, sort_keys=True) + "\n")
        else:
            for name, err in sorted(report.max_error.items()):
                f.write(f"{name:<28} {err:.3e}\n")
            f.write(f"{'worst':<28} {report.worst:.3e} ({'ok' if ok else 'FAIL'}, {report.n_configs} configs)\n")
    return EXIT_OK if ok else EXIT_DIVERGED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="rng seed (overrides the config)")
    common.add_argument("--config", type=Path, default=None, help="INI config file")
    common.add_argument("--out", default=None, help="output path (default: stdout)")
    common.add_argument("--format", choices=("table", "machine"), default="table")

    p = argparse.ArgumentParser(prog="idline", description="Inverse-depth line bundle adjustment on synthetic scenes.")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a synthetic world file")
    g.add_argument("--no-observations", action="store_true", help="store the world only")

    s = sub.add_parser("solve", parents=[common], help="solve one window from a world file")
    s.add_argument("world", type=Path)
    s.add_argument("--representation", choices=REPRESENTATIONS, default="inv-depth")
    s.add_argument("--solver", choices=SOLVERS, default="joint")
    s.add_argument("--trajectory", default=None, help="write the estimate as a TUM trajectory")

    b = sub.add_parser("benchmark", parents=[common], help="run the representation x solver x seed matrix")
    b.add_argument("--representation", choices=REPRESENTATIONS, default=None)
    b.add_argument("--solver", choices=SOLVERS, default=None)
    b.add_argument("--summary", default=None, help="write the CSV summary here")
    b.add_argument("--workers", type=int, default=None)

    j = sub.add_parser("check-jacobians", parents=[common], help="finite-difference Jacobian suite")
    j.add_argument("--configs", type=int, default=500)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "generate": _cmd_generate,
        "solve": _cmd_solve,
        "benchmark": _cmd_benchmark,
        "check-jacobians": _cmd_check_jacobians,
    }
    try:
        cfg = load_config(args.config)
        return handlers[args.command](args, cfg)
    except ConfigError as exc:
        print(f"idline: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
