"""Sliding-window state, marginalization prior and factor graph containers."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..errors import MissingStateError
from ..geometry import (
    CameraPose,
    InverseDepthLine,
    OrthonormalLine,
    PluckerLine,
    orthonormal_from_plucker,
    plucker_from_inverse_depth,
    plucker_from_orthonormal,
    transform_line,
)
from ..lie import so3_log
from ..residuals import LineObservation, OdometryFactor

WINDOW_SIZE = 10

# Variable keys used by the prior and by the normal-equation layout:
#   ("pose", frame_id), ("extrinsic",), ("point", feature_id), ("line", feature_id)
# Velocity and IMU bias blocks would slot in next to each pose if an inertial
# factor ever replaces the odometry factor.
VarKey = tuple


@dataclass
class PointFeature:
    anchor_frame: int
    anchor_pixel: np.ndarray
    inv_depth: float

    def __post_init__(self):
        self.anchor_pixel = np.asarray(self.anchor_pixel, dtype=float).reshape(2)
        self.inv_depth = float(self.inv_depth)


@dataclass
class LineFeature:
    anchor_frame: int
    line: InverseDepthLine


@dataclass
class MarginalPrior:
    """Linearized marginal ``|r_p + J_p (x - x_lin)|^2 + cost_offset``.

    ``keys`` list the retained variables in column order; ``linearization``
    holds their values when the prior was formed.  ``cost_offset`` is the
    part of the marginal cost that no retained variable can change, so the
    prior reproduces the eliminated cost exactly at the linearization point.
    """

    keys: list[VarKey]
    J_p: np.ndarray
    r_p: np.ndarray
    linearization: dict
    cost_offset: float = 0.0

    @property
    def dim(self) -> int:
        return self.J_p.shape[1]

    def information(self) -> np.ndarray:
        return self.J_p.T @ self.J_p


@dataclass
class SlidingWindowState:
    """Keyframe poses (body-in-world), body-from-camera extrinsic and features.

    Lines live either in ``lines`` (anchored inverse depth, 2 parameters) or
    in ``ortho_lines`` (world-frame orthonormal, 4 parameters); a state uses
    one or the other.
    """

    frame_ids: list[int] = field(default_factory=list)
    poses: dict[int, CameraPose] = field(default_factory=dict)
    extrinsic: CameraPose = field(default_factory=CameraPose.identity)
    points: dict[int, PointFeature] = field(default_factory=dict)
    lines: dict[int, LineFeature] = field(default_factory=dict)
    ortho_lines: dict[int, OrthonormalLine] = field(default_factory=dict)
    prior: MarginalPrior | None = None

    def copy(self) -> SlidingWindowState:
        """Independent containers; immutable values (poses, lines, prior arrays) are shared."""
        return SlidingWindowState(
            list(self.frame_ids),
            dict(self.poses),
            self.extrinsic,
            {k: copy.copy(v) for k, v in self.points.items()},
            {k: copy.copy(v) for k, v in self.lines.items()},
            dict(self.ortho_lines),
            self.prior,
        )

    def pose(self, frame_id: int) -> CameraPose:
        try:
            return self.poses[frame_id]
        except KeyError:
            raise MissingStateError(f"frame {frame_id} not in window") from None

    def add_frame(self, frame_id: int, pose: CameraPose) -> None:
        if self.frame_ids and frame_id <= self.frame_ids[-1]:
            raise ValueError("frame ids must increase")
        self.frame_ids.append(frame_id)
        self.poses[frame_id] = pose

    @property
    def representation(self) -> str:
        if self.ortho_lines:
            return "orthonormal"
        if self.lines:
            return "inv-depth"
        return "point-only"

    def line_param_count(self) -> int:
        return 2 * len(self.lines) + 4 * len(self.ortho_lines)

    def camera_pose(self, frame_id: int) -> CameraPose:
        return self.pose(frame_id) @ self.extrinsic

    def world_line(self, feature_id: int) -> PluckerLine:
        if feature_id in self.ortho_lines:
            return plucker_from_orthonormal(self.ortho_lines[feature_id])
        feat = self.lines[feature_id]
        return transform_line(plucker_from_inverse_depth(feat.line), self.camera_pose(feat.anchor_frame))

    def world_point(self, feature_id: int) -> np.ndarray:
        feat = self.points[feature_id]
        p = np.append(feat.anchor_pixel, 1.0) / feat.inv_depth
        return self.camera_pose(feat.anchor_frame).apply(p)

    def to_orthonormal(self) -> SlidingWindowState:
        """Same geometry with every anchored line converted to the world orthonormal form."""
        out = self.copy()
        out.ortho_lines = {fid: orthonormal_from_plucker(self.world_line(fid)) for fid in self.lines}
        out.lines = {}
        return out

    def without_lines(self) -> SlidingWindowState:
        out = self.copy()
        out.lines, out.ortho_lines = {}, {}
        return out

    # --- variable access used by the prior ---------------------------------

    def value(self, key: VarKey):
        kind = key[0]
        if kind == "pose":
            return self.pose(key[1])
        if kind == "extrinsic":
            return self.extrinsic
        if kind == "point":
            return self.points[key[1]].inv_depth
        if kind == "line":
            if key[1] in self.ortho_lines:
                return self.ortho_lines[key[1]]
            ln = self.lines[key[1]].line
            return np.array([ln.lambda_s, ln.lambda_e])
        raise MissingStateError(f"unknown variable {key!r}")

    def has(self, key: VarKey) -> bool:
        kind = key[0]
        if kind == "pose":
            return key[1] in self.poses
        if kind == "extrinsic":
            return True
        if kind == "point":
            return key[1] in self.points
        if kind == "line":
            return key[1] in self.lines or key[1] in self.ortho_lines
        return False


def var_dim(key: VarKey, state: SlidingWindowState) -> int:
    kind = key[0]
    if kind in ("pose", "extrinsic"):
        return 6
    if kind == "point":
        return 1
    return 4 if key[1] in state.ortho_lines else 2


def var_minus(value, ref) -> np.ndarray:
    """Tangent difference ``value - ref`` for any variable type."""
    if isinstance(value, CameraPose):
        return value.minus(ref)
    if isinstance(value, OrthonormalLine):
        return np.append(so3_log(ref.U.T @ value.U), value.theta1 - ref.theta1)
    return np.atleast_1d(np.asarray(value, dtype=float) - np.asarray(ref, dtype=float))


def prior_residual(prior: MarginalPrior, state: SlidingWindowState) -> np.ndarray:
    dx = np.concatenate([var_minus(state.value(k), prior.linearization[k]) for k in prior.keys])
    return prior.r_p + prior.J_p @ dx


# --- factor graph -----------------------------------------------------------


@dataclass(frozen=True)
class PointFactor:
    feature_id: int
    frame_id: int
    obs: np.ndarray  # normalized image coordinates
    sqrt_info: np.ndarray  # 2x2


@dataclass(frozen=True)
class LineFactor:
    feature_id: int
    obs: LineObservation
    sqrt_info: np.ndarray  # 2x2

    @property
    def frame_id(self) -> int:
        return self.obs.frame_id


@dataclass
class FactorGraph:
    """Measurement factors; the marginalization prior lives on the state it linearizes."""

    odometry: list[OdometryFactor] = field(default_factory=list)
    points: list[PointFactor] = field(default_factory=list)
    lines: list[LineFactor] = field(default_factory=list)

    def copy(self) -> FactorGraph:
        return FactorGraph(list(self.odometry), list(self.points), list(self.lines))

    def without_lines(self) -> FactorGraph:
        return FactorGraph(list(self.odometry), list(self.points), [])

    def observing_frames(self, kind: str, feature_id: int) -> list[int]:
        factors = self.points if kind == "point" else self.lines
        return sorted({f.frame_id for f in factors if f.feature_id == feature_id})

    def validate(self, state: SlidingWindowState) -> None:
        """Raise ``MissingStateError`` for any factor referencing a missing id."""
        for f in self.odometry:
            state.pose(f.frame_i)
            state.pose(f.frame_j)
        for f in self.points:
            state.pose(f.frame_id)
            if f.feature_id not in state.points:
                raise MissingStateError(f"point {f.feature_id} not in state")
        for f in self.lines:
            state.pose(f.frame_id)
            if f.feature_id not in state.lines and f.feature_id not in state.ortho_lines:
                raise MissingStateError(f"line {f.feature_id} not in state")
        for feat in state.points.values():
            state.pose(feat.anchor_frame)
        for feat in state.lines.values():
            state.pose(feat.anchor_frame)
        if state.prior is not None:
            for key in state.prior.keys:
                if not state.has(key):
                    raise MissingStateError(f"prior references missing variable {key!r}")
