"""Synthetic scenes, trajectories and noisy point/line observations.

Stands in for a camera/IMU front end: ground-truth points and segments are
scattered in a box in front of the cameras, observed with pixel noise, and
consecutive keyframes are linked by noisy relative-pose odometry.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .geometry import (
    CameraPose,
    InverseDepthLine,
    PluckerLine,
    invert_transform_line,
    orthonormal_from_plucker,
)
from .initialization import (
    DEPTH_BOUNDS,
    LineTrack,
    init_point_inverse_depth,
    initialize_line,
    relative_camera_pose,
)
from .lie import random_rotation, so3_exp
from .residuals import CameraIntrinsics, LineObservation, OdometryFactor
from .solver.state import (
    FactorGraph,
    LineFactor,
    LineFeature,
    PointFactor,
    PointFeature,
    SlidingWindowState,
)

TRAJECTORY_KINDS = ("line-segment", "circular-arc", "random-walk", "rotation-only")
REPRESENTATIONS = ("inv-depth", "orthonormal", "point-only")


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(460.0, 460.0, 376.0, 240.0)


@dataclass
class SceneConfig:
    n_points: int = 30
    n_lines: int = 40
    workspace_min: tuple[float, float, float] = (-3.0, -2.0, 4.0)
    workspace_max: tuple[float, float, float] = (3.0, 2.0, 8.0)
    line_length: tuple[float, float] = (0.5, 2.0)
    intrinsics: CameraIntrinsics = field(default_factory=default_intrinsics)
    image_size: tuple[int, int] = (752, 480)
    min_views: int = 2
    max_tries: int = 100_000

    def __post_init__(self):
        if self.n_points < 0 or self.n_lines < 0:
            raise ValueError("feature counts must be non-negative")
        if any(a >= b for a, b in zip(self.workspace_min, self.workspace_max)):
            raise ValueError("workspace bounds are not ordered")
        lo, hi = self.line_length
        if not 0 < lo <= hi:
            raise ValueError("line lengths must be positive and ordered")
        if self.min_views < 1:
            raise ValueError("min_views must be at least 1")


@dataclass
class TrajectoryConfig:
    kind: str = "line-segment"
    n_frames: int = 10
    step_length: float = 0.15
    rotation_rate: float = 0.02  # rad per frame

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.n_frames < 2:
            raise ValueError("need at least two frames")
        if self.step_length < 0 or self.rotation_rate < 0:
            raise ValueError("step length and rotation rate must be non-negative")


@dataclass
class NoiseConfig:
    pixel_sigma: float = 1.0
    odometry_rot_sigma: float = 0.002
    odometry_trans_sigma: float = 0.01
    endpoint_resample: bool = True
    seed: int = 0
    # weights of noiseless odometry use these sigmas instead of zero
    odometry_rot_floor: float = 1e-5
    odometry_trans_floor: float = 1e-4

    def __post_init__(self):
        for name in ("pixel_sigma", "odometry_rot_sigma", "odometry_trans_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @classmethod
    def noiseless(cls, seed: int = 0) -> NoiseConfig:
        return cls(0.0, 0.0, 0.0, endpoint_resample=False, seed=seed)


@dataclass
class SyntheticWorld:
    poses: list[CameraPose]  # body-in-world per frame
    points: np.ndarray  # (n, 3)
    lines: np.ndarray  # (n, 2, 3) segment endpoints
    intrinsics: CameraIntrinsics
    image_size: tuple[int, int]
    extrinsic: CameraPose = field(default_factory=CameraPose.identity)
    seed: int = 0

    @property
    def n_frames(self) -> int:
        return len(self.poses)

    def camera_pose(self, k: int) -> CameraPose:
        return self.poses[k] @ self.extrinsic

    def world_line(self, fid: int) -> PluckerLine:
        return PluckerLine.from_points(self.lines[fid, 0], self.lines[fid, 1])

    def project(self, k: int, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Normalized coordinates and depths of world points ``X`` (n, 3) in frame ``k``."""
        cam = self.camera_pose(k)
        Xc = (np.atleast_2d(X) - cam.t) @ cam.R
        z = Xc[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            uv = Xc[:, :2] / z[:, None]
        return uv, z

    def visible(self, k: int, X: np.ndarray, margin: float = 1.0) -> np.ndarray:
        uv, z = self.project(k, X)
        px = self.intrinsics.to_pixels(uv) if len(uv) else uv
        w, h = self.image_size
        ok = z > 0.1
        ok &= (px[:, 0] >= margin) & (px[:, 0] <= w - 1 - margin)
        ok &= (px[:, 1] >= margin) & (px[:, 1] <= h - 1 - margin)
        return ok


@dataclass
class ObservationSet:
    """Per-frame observations in normalized coordinates plus consecutive odometry."""

    points: dict[int, list[tuple[int, np.ndarray]]]
    lines: dict[int, list[tuple[int, LineObservation]]]
    odometry: list[OdometryFactor]
    noise: NoiseConfig
    world: SyntheticWorld

    def point_tracks(self, frames) -> dict[int, list[tuple[int, np.ndarray]]]:
        tracks: dict[int, list] = {}
        for k in frames:
            for fid, uv in self.points.get(k, []):
                tracks.setdefault(fid, []).append((k, uv))
        return tracks

    def line_tracks(self, frames) -> dict[int, list[LineObservation]]:
        tracks: dict[int, list] = {}
        for k in frames:
            for fid, obs in self.lines.get(k, []):
                tracks.setdefault(fid, []).append(obs)
        return tracks


# --- trajectories -------------------------------------------------------------


def _rot_y(a: float) -> np.ndarray:
    return so3_exp(np.array([0.0, a, 0.0]))


def generate_trajectory(traj: TrajectoryConfig, rng: np.random.Generator) -> list[CameraPose]:
    n = traj.n_frames
    c = (n - 1) / 2
    poses = []
    if traj.kind == "line-segment":
        for k in range(n):
            R = so3_exp(traj.rotation_rate * (k - c) * np.array([0.3, 1.0, 0.0]))
            poses.append(CameraPose(R, np.array([(k - c) * traj.step_length, 0.0, 0.0])))
    elif traj.kind == "circular-arc":
        radius = 6.0
        center = np.array([0.0, 0.0, radius])
        for k in range(n):
            a = (k - c) * traj.step_length / radius
            R = _rot_y(a)
            poses.append(CameraPose(R, center - radius * R[:, 2]))
    elif traj.kind == "random-walk":
        R, t = np.eye(3), np.zeros(3)
        for k in range(n):
            poses.append(CameraPose(R, t))
            step = rng.normal(size=3) * np.array([1.0, 0.5, 0.3])
            t = t + traj.step_length * step / np.linalg.norm(step)
            axis = rng.normal(size=3)
            R = R @ so3_exp(traj.rotation_rate * axis / np.linalg.norm(axis))
        # re-center so the mean position sits at the origin
        mean = np.mean([p.t for p in poses], axis=0)
        poses = [CameraPose(p.R, p.t - mean) for p in poses]
    else:  # rotation-only
        for k in range(n):
            R = so3_exp(traj.rotation_rate * (k - c) * np.array([0.2, 1.0, 0.1]))
            poses.append(CameraPose(R, np.zeros(3)))
    return poses


def generate_world(scene: SceneConfig, traj: TrajectoryConfig, seed: int = 0) -> SyntheticWorld:
    """Deterministic in ``seed``; features are rejection-sampled until visible in ``min_views`` frames."""
    rng = np.random.default_rng(seed)
    poses = generate_trajectory(traj, rng)
    world = SyntheticWorld(poses, np.zeros((0, 3)), np.zeros((0, 2, 3)), scene.intrinsics, scene.image_size, seed=seed)
    lo, hi = np.array(scene.workspace_min), np.array(scene.workspace_max)

    def n_views(X):
        return sum(bool(np.all(world.visible(k, X))) for k in range(world.n_frames))

    points = []
    tries = 0
    while len(points) < scene.n_points:
        tries += 1
        if tries > scene.max_tries:
            raise GeometryError("could not place visible points; enlarge the workspace")
        X = rng.uniform(lo, hi)
        if n_views(X[None]) >= scene.min_views:
            points.append(X)
    lines = []
    tries = 0
    while len(lines) < scene.n_lines:
        tries += 1
        if tries > scene.max_tries:
            raise GeometryError("could not place visible lines; enlarge the workspace")
        mid = rng.uniform(lo, hi)
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        half = 0.5 * rng.uniform(*scene.line_length)
        seg = np.array([mid - half * u, mid + half * u])
        if np.any(seg < lo) or np.any(seg > hi):
            continue
        if n_views(seg) >= scene.min_views:
            lines.append(seg)
    world.points = np.array(points).reshape(-1, 3)
    world.lines = np.array(lines).reshape(-1, 2, 3)
    return world


# --- observation --------------------------------------------------------------


def observe(world: SyntheticWorld, noise: NoiseConfig) -> ObservationSet:
    """Project every visible feature; noise is drawn in pixels then normalized."""
    rng = np.random.default_rng(noise.seed)
    K = world.intrinsics
    sig = noise.pixel_sigma
    f = np.array([K.fx, K.fy])
    points: dict[int, list] = {}
    lines: dict[int, list] = {}
    for k in range(world.n_frames):
        plist = []
        if len(world.points):
            vis = world.visible(k, world.points)
            uv, _ = world.project(k, world.points)
            for fid in np.flatnonzero(vis):
                plist.append((int(fid), uv[fid] + rng.normal(0.0, sig, 2) / f))
        points[k] = plist
        llist = []
        for fid in range(len(world.lines)):
            seg = world.lines[fid]
            if not np.all(world.visible(k, seg)):
                continue
            if noise.endpoint_resample:
                ts, te = rng.uniform(0.0, 0.3), rng.uniform(0.7, 1.0)
            else:
                ts, te = 0.0, 1.0
            ends = np.array([seg[0] + ts * (seg[1] - seg[0]), seg[0] + te * (seg[1] - seg[0])])
            uv, _ = world.project(k, ends)
            uv = uv + rng.normal(0.0, sig, (2, 2)) / f
            try:
                llist.append((fid, LineObservation(k, uv[0], uv[1])))
            except GeometryError:
                continue
        lines[k] = llist
    odometry = []
    s_t = max(noise.odometry_trans_sigma, noise.odometry_trans_floor)
    s_r = max(noise.odometry_rot_sigma, noise.odometry_rot_floor)
    sqrt_info = np.diag([1 / s_t] * 3 + [1 / s_r] * 3)
    for k in range(world.n_frames - 1):
        rel = world.poses[k].inverse() @ world.poses[k + 1]
        xi = np.concatenate(
            [rng.normal(0.0, noise.odometry_trans_sigma, 3), rng.normal(0.0, noise.odometry_rot_sigma, 3)]
        )
        odometry.append(OdometryFactor(k, k + 1, rel.plus(xi), sqrt_info))
    return ObservationSet(points, lines, odometry, noise, world)


# --- windows ------------------------------------------------------------------


def visual_sqrt_info(K: CameraIntrinsics, sigma_px: float = 1.5) -> np.ndarray:
    """Whitening for normalized-coordinate residuals with a ``sigma_px`` pixel deviation."""
    return np.diag([K.fx / sigma_px, K.fy / sigma_px])


def build_graph(
    obs: ObservationSet,
    frames,
    *,
    with_lines: bool = True,
    with_points: bool = True,
    visual_sigma_px: float = 1.5,
) -> FactorGraph:
    frames = list(frames)
    fs = set(frames)
    S = visual_sqrt_info(obs.world.intrinsics, visual_sigma_px)
    g = FactorGraph()
    g.odometry = [f for f in obs.odometry if f.frame_i in fs and f.frame_j in fs]
    if with_points:
        for k in frames:
            g.points.extend(PointFactor(fid, k, uv, S) for fid, uv in obs.points.get(k, []))
    if with_lines:
        for k in frames:
            g.lines.extend(LineFactor(fid, o, S) for fid, o in obs.lines.get(k, []))
    return g


def prune_graph(graph: FactorGraph, state: SlidingWindowState) -> FactorGraph:
    """Keep only factors whose feature is in ``state``."""
    return FactorGraph(
        [f for f in graph.odometry if f.frame_i in state.poses and f.frame_j in state.poses],
        [f for f in graph.points if f.feature_id in state.points and f.frame_id in state.poses],
        [
            f
            for f in graph.lines
            if (f.feature_id in state.lines or f.feature_id in state.ortho_lines) and f.frame_id in state.poses
        ],
    )


def _ray_line_depth(p: np.ndarray, line: PluckerLine) -> float:
    """Depth along the ray ``a p`` of its closest approach to ``line``."""
    d = line.d / np.linalg.norm(line.d)
    P0 = np.cross(line.d, line.n) / (line.d @ line.d)  # closest point to the origin
    # minimize |a p - P0 - mu d| over (a, mu)
    A = np.column_stack([p, -d])
    a, _ = np.linalg.lstsq(A, P0, rcond=None)[0]
    return float(a)


def ground_truth_state(
    world: SyntheticWorld, obs: ObservationSet, frames, representation: str = "inv-depth"
) -> tuple[FactorGraph, SlidingWindowState]:
    """True poses and features, anchored at each feature's first observation in ``frames``.

    Anchor pixels are the (possibly noisy) observations, and depths are the
    true depths along those rays, so a noiseless set has zero cost.
    """
    if representation not in REPRESENTATIONS:
        raise ValueError(f"unknown representation {representation!r}")
    frames = list(frames)
    state = SlidingWindowState(extrinsic=world.extrinsic)
    for k in frames:
        state.add_frame(k, world.poses[k])
    for fid, track in sorted(obs.point_tracks(frames).items()):
        if len(track) < 2:
            continue
        k, uv = track[0]
        Xc = world.camera_pose(k).apply_inverse(world.points[fid])
        state.points[fid] = PointFeature(k, uv, 1.0 / Xc[2])
    if representation != "point-only":
        for fid, track in sorted(obs.line_tracks(frames).items()):
            if len(track) < 2:
                continue
            Lw = world.world_line(fid)
            if representation == "orthonormal":
                state.ortho_lines[fid] = orthonormal_from_plucker(Lw)
                continue
            a = track[0]
            cam = world.camera_pose(a.frame_id)
            Lc = invert_transform_line(Lw, cam)
            zs = _ray_line_depth(a.s, Lc)
            ze = _ray_line_depth(a.e, Lc)
            state.lines[fid] = LineFeature(a.frame_id, InverseDepthLine(1 / zs, 1 / ze, a.s_obs, a.e_obs))
    graph = build_graph(obs, frames, with_lines=representation != "point-only")
    return prune_graph(graph, state), state


def chain_odometry(obs: ObservationSet, frames, first: CameraPose) -> dict[int, CameraPose]:
    frames = list(frames)
    poses = {frames[0]: first}
    by_pair = {(f.frame_i, f.frame_j): f for f in obs.odometry}
    for a, b in zip(frames[:-1], frames[1:]):
        Z = CameraPose.identity()
        for k in range(a, b):
            Z = Z @ by_pair[(k, k + 1)].rel_pose_meas
        poses[b] = poses[a] @ Z
    return poses


def initialize_features(
    obs: ObservationSet,
    state: SlidingWindowState,
    representation: str = "inv-depth",
    *,
    depth_bounds: tuple[float, float] = DEPTH_BOUNDS,
) -> SlidingWindowState:
    """Triangulate points and lines from the state's current poses.

    Features whose initialization fails (no parallax, behind camera, depth
    out of bounds) are left out.
    """
    frames = state.frame_ids
    for fid, track in sorted(obs.point_tracks(frames).items()):
        if len(track) < 2:
            continue
        k, uv = track[0]
        anchor = state.pose(k)
        rel = [(o, relative_camera_pose(anchor, state.pose(j), state.extrinsic)) for j, o in track[1:]]
        try:
            lam = init_point_inverse_depth(uv, rel)
        except GeometryError:
            continue
        if depth_bounds[0] <= lam <= depth_bounds[1]:
            state.points[fid] = PointFeature(k, uv, lam)
    if representation == "point-only":
        return state
    for fid, track in sorted(obs.line_tracks(frames).items()):
        if len(track) < 2:
            continue
        a = track[0]
        lt = LineTrack(a.frame_id, a.s_obs, a.e_obs, track[1:])
        anchor = state.pose(a.frame_id)
        rel = {o.frame_id: relative_camera_pose(anchor, state.pose(o.frame_id), state.extrinsic) for o in track[1:]}
        try:
            line = initialize_line(lt, rel, depth_bounds=depth_bounds)
        except GeometryError:
            continue
        state.lines[fid] = LineFeature(a.frame_id, line)
    if representation == "orthonormal":
        state = state.to_orthonormal()
    return state


def initial_state(
    world: SyntheticWorld,
    obs: ObservationSet,
    frames,
    representation: str = "inv-depth",
    *,
    init: str = "odometry",
    features: str = "initialize",
    rot_sigma: float = 0.02,
    trans_sigma: float = 0.05,
    seed: int = 0,
) -> tuple[FactorGraph, SlidingWindowState]:
    """Solver starting point.

    Poses come from odometry chaining (``init="odometry"``) or from
    perturbing the ground truth (``init="perturb"``).  Features are then
    triangulated from those poses (``features="initialize"``) or kept at
    their true values (``features="truth"``).
    """
    if representation not in REPRESENTATIONS:
        raise ValueError(f"unknown representation {representation!r}")
    if features not in ("initialize", "truth"):
        raise ValueError(f"unknown feature mode {features!r}")
    frames = list(frames)
    if init == "odometry":
        poses = chain_odometry(obs, frames, world.poses[frames[0]])
    elif init == "perturb":
        truth = SlidingWindowState(extrinsic=world.extrinsic)
        for k in frames:
            truth.add_frame(k, world.poses[k])
        poses = perturb_state(truth, rot_sigma, trans_sigma, seed).poses
    else:
        raise ValueError(f"unknown init mode {init!r}")
    if features == "truth":
        graph, state = ground_truth_state(world, obs, frames, representation)
        state.poses = {k: poses[k] for k in frames}
        return graph, state
    state = SlidingWindowState(extrinsic=world.extrinsic)
    for k in frames:
        state.add_frame(k, poses[k])
    state = initialize_features(obs, state, representation)
    graph = build_graph(obs, frames, with_lines=representation != "point-only")
    return prune_graph(graph, state), state


def perturb_state(
    state: SlidingWindowState,
    rot_sigma: float,
    trans_sigma: float,
    seed: int = 0,
    *,
    depth_sigma: float = 0.0,
) -> SlidingWindowState:
    """Perturb every pose but the first; inverse depths get relative noise ``depth_sigma``."""
    rng = np.random.default_rng(seed)
    out = state.copy()
    for k in state.frame_ids[1:]:
        xi = np.concatenate([rng.normal(0.0, trans_sigma, 3), rng.normal(0.0, rot_sigma, 3)])
        out.poses[k] = state.poses[k].plus(xi)
    if depth_sigma > 0:
        for fid in sorted(out.points):
            p = out.points[fid]
            p.inv_depth *= float(np.exp(rng.normal(0.0, depth_sigma)))
        for fid in sorted(out.lines):
            ln = out.lines[fid].line
            fs, fe = np.exp(rng.normal(0.0, depth_sigma, 2))
            out.lines[fid].line = ln.with_depths(ln.lambda_s * fs, ln.lambda_e * fe)
    return out


def random_pose(rng: np.random.Generator, rot_scale: float = np.pi, trans_scale: float = 1.0) -> CameraPose:
    return CameraPose(random_rotation(rng, rot_scale), rng.normal(0.0, trans_scale, 3))
