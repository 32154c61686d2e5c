"""Serialization: world / observation JSON, JSONL run records, CSV summaries, TUM trajectories.

World files are a single JSON object::

    {"format": "idline-world", "version": 1,
     "world": {"poses": [{"R": [[...]], "t": [...]}, ...], "points": [[x, y, z], ...],
               "lines": [[[x, y, z], [x, y, z]], ...], "intrinsics": [fx, fy, cx, cy],
               "image_size": [w, h], "extrinsic": {"R": ..., "t": ...}, "seed": 0},
     "observations": {...}}          # optional, see observations_to_dict

Observations are stored in normalized image coordinates.  Floats are written
with ``repr`` precision so files round-trip bit for bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import IO, Iterable

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import ConfigError
from ..geometry import CameraPose
from ..residuals import CameraIntrinsics, LineObservation, OdometryFactor
from ..synthetic import NoiseConfig, ObservationSet, SyntheticWorld
from .metrics import Trajectory

WORLD_FORMAT = "idline-world"
WORLD_VERSION = 1


def _pose_to_dict(p: CameraPose) -> dict:
    return {"R": p.R.tolist(), "t": p.t.tolist()}


def _pose_from_dict(d: dict) -> CameraPose:
    return CameraPose(np.array(d["R"], dtype=float), np.array(d["t"], dtype=float))


def world_to_dict(world: SyntheticWorld) -> dict:
    K = world.intrinsics
    return {
        "poses": [_pose_to_dict(p) for p in world.poses],
        "points": np.asarray(world.points).tolist(),
        "lines": np.asarray(world.lines).tolist(),
        "intrinsics": [K.fx, K.fy, K.cx, K.cy],
        "image_size": list(world.image_size),
        "extrinsic": _pose_to_dict(world.extrinsic),
        "seed": world.seed,
    }


def world_from_dict(d: dict) -> SyntheticWorld:
    return SyntheticWorld(
        poses=[_pose_from_dict(p) for p in d["poses"]],
        points=np.array(d["points"], dtype=float).reshape(-1, 3),
        lines=np.array(d["lines"], dtype=float).reshape(-1, 2, 3),
        intrinsics=CameraIntrinsics(*map(float, d["intrinsics"])),
        image_size=tuple(int(x) for x in d["image_size"]),
        extrinsic=_pose_from_dict(d["extrinsic"]),
        seed=int(d.get("seed", 0)),
    )


def observations_to_dict(obs: ObservationSet) -> dict:
    return {
        "noise": asdict(obs.noise),
        "points": {
            str(k): [[fid, uv[0], uv[1]] for fid, uv in v] for k, v in sorted(obs.points.items())
        },
        "lines": {
            str(k): [[fid, *o.s_obs.tolist(), *o.e_obs.tolist()] for fid, o in v]
            for k, v in sorted(obs.lines.items())
        },
        "odometry": [
            {
                "i": f.frame_i,
                "j": f.frame_j,
                "measurement": _pose_to_dict(f.rel_pose_meas),
                "sqrt_info": f.sqrt_info.tolist(),
            }
            for f in obs.odometry
        ],
    }


def observations_from_dict(d: dict, world: SyntheticWorld) -> ObservationSet:
    points = {
        int(k): [(int(r[0]), np.array(r[1:3], dtype=float)) for r in v] for k, v in d["points"].items()
    }
    lines = {
        int(k): [(int(r[0]), LineObservation(int(k), r[1:3], r[3:5])) for r in v]
        for k, v in d["lines"].items()
    }
    odometry = [
        OdometryFactor(int(f["i"]), int(f["j"]), _pose_from_dict(f["measurement"]), np.array(f["sqrt_info"]))
        for f in d["odometry"]
    ]
    return ObservationSet(points, lines, odometry, NoiseConfig(**d["noise"]), world)


def write_world(path: str | Path, world: SyntheticWorld, obs: ObservationSet | None = None) -> None:
    doc = {"format": WORLD_FORMAT, "version": WORLD_VERSION, "world": world_to_dict(world)}
    if obs is not None:
        doc["observations"] = observations_to_dict(obs)
    Path(path).write_text(json.dumps(doc))


def read_world(path: str | Path) -> tuple[SyntheticWorld, ObservationSet | None]:
    """Load a world file; raises ``ConfigError`` on malformed content."""
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read world file {p}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict) or doc.get("format") != WORLD_FORMAT:
        raise ConfigError(f"{p}: not a world file")
    try:
        world = world_from_dict(doc["world"])
        obs = observations_from_dict(doc["observations"], world) if "observations" in doc else None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{p}: malformed world file ({exc})") from None
    return world, obs


# --- run records ----------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, CameraIntrinsics):
        return [x.fx, x.fy, x.cx, x.cy]
    return x


def write_jsonl(stream: IO[str], records: Iterable[dict]) -> None:
    for rec in records:
        stream.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")


def read_jsonl(stream: IO[str]) -> list[dict]:
    return [json.loads(line) for line in stream if line.strip()]


def write_csv(stream: IO[str], rows: list[dict], columns: list[str]) -> None:
    w = csv.DictWriter(stream, fieldnames=columns, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


def write_tum(stream: IO[str], traj: Trajectory) -> None:
    """``timestamp tx ty tz qx qy qz qw`` per line; frame indices serve as timestamps."""
    for idx, pose in zip(traj.indices, traj.poses):
        q = Rotation.from_matrix(pose.R).as_quat()  # x, y, z, w
        vals = " ".join(f"{v:.9f}" for v in (*pose.t, *q))
        stream.write(f"{float(idx):.6f} {vals}\n")


def read_tum(stream: IO[str]) -> Trajectory:
    idx, poses = [], []
    for line in stream:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        v = [float(x) for x in line.split()]
        if len(v) != 8:
            raise ValueError(f"expected 8 columns, got {len(v)}")
        idx.append(v[0])
        poses.append(CameraPose(Rotation.from_quat(v[4:8]).as_matrix(), np.array(v[1:4])))
    return Trajectory(np.array(idx), poses)
