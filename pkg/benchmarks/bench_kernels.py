"""Compiled vs numpy factor kernels.

Times each batched kernel on synthetic inputs and a full joint solve with
either backend, after checking the two backends agree.

    python benchmarks/bench_kernels.py [--n 2000] [--repeat 20]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from idline import kernels
from idline.lie import random_rotation
from idline.solver import SolverConfig, lm_solve
from idline.synthetic import NoiseConfig, SceneConfig, TrajectoryConfig, generate_world, initial_state, observe


def _inputs(n: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)

    def rots(scale):
        return np.array([random_rotation(rng, scale) for _ in range(n)])

    anchor_s = rng.uniform(-0.4, 0.4, (n, 2))
    anchor_e = anchor_s + rng.uniform(0.1, 0.3, (n, 2))
    return {
        "Ri": rots(0.2),
        "ti": rng.normal(0, 0.3, (n, 3)),
        "Rj": rots(0.2),
        "tj": rng.normal(0, 0.3, (n, 3)),
        "Rc": rots(0.05),
        "tc": rng.normal(0, 0.05, (n, 3)),
        "lam": rng.uniform(0.1, 0.3, (n, 2)),
        "anchor_s": anchor_s,
        "anchor_e": anchor_e,
        "obs_s": anchor_s + rng.normal(0, 0.01, (n, 2)),
        "obs_e": anchor_e + rng.normal(0, 0.01, (n, 2)),
        "kl": (1.0, 1.0, 0.0, 0.0),
    }


def _calls(mod, x):
    L = np.hstack([np.cross(x["ti"], x["tj"] - x["ti"]), x["tj"] - x["ti"]])
    dL = np.broadcast_to(np.eye(6)[:, :4], (len(L), 6, 4)).copy()
    return {
        "line_factors": lambda: mod.line_factors(
            x["Ri"], x["ti"], x["Rj"], x["tj"], x["Rc"], x["tc"], x["lam"],
            x["anchor_s"], x["anchor_e"], x["obs_s"], x["obs_e"], x["kl"],
        ),
        "world_line_factors": lambda: mod.world_line_factors(
            x["Rj"], x["tj"], x["Rc"], x["tc"], L, dL, x["obs_s"], x["obs_e"], x["kl"]
        ),
        "point_factors": lambda: mod.point_factors(
            x["Ri"], x["ti"], x["Rj"], x["tj"], x["Rc"], x["tc"], np.ascontiguousarray(x["lam"][:, 0]), x["anchor_s"], x["obs_s"]
        ),
    }


def _best(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def _rel_diff(a, b) -> float:
    out = 0.0
    for u, v in zip(a, b):
        u, v = np.asarray(u, float), np.asarray(v, float)
        out = max(out, float(np.max(np.abs(u - v), initial=0.0)) / max(float(np.max(np.abs(u), initial=0.0)), 1e-300))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000, help="factors per kernel call")
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    if not kernels.compiled_available():
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    py, ext = kernels.backend("python"), kernels.backend("compiled")
    x = _inputs(args.n)
    cpy, cext = _calls(py, x), _calls(ext, x)

    print(f"{'kernel':<22}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}{'rel diff':>13}")
    for name in cpy:
        diff = _rel_diff(cpy[name](), cext[name]())
        tp, te = _best(cpy[name], args.repeat), _best(cext[name], args.repeat)
        print(f"{name:<22}{1e3 * tp:>12.3f}{1e3 * te:>14.3f}{tp / te:>10.1f}{diff:>13.1e}")

    world = generate_world(SceneConfig(), TrajectoryConfig(), seed=0)
    obs = observe(world, NoiseConfig(seed=0))
    graph, state = initial_state(world, obs, range(world.n_frames), "inv-depth")
    for label, mod in (("python", py), ("compiled", ext)):
        t = time.perf_counter()
        _, rep = lm_solve(graph, state, SolverConfig(), kernels=mod)
        dt = time.perf_counter() - t
        print(f"joint solve ({label:<8}) {1e3 * dt:8.1f} ms, {rep.iterations} iterations, cost {rep.final_cost:.6e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
