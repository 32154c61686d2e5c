"""Line triangulation from observation planes.

Each non-anchor view of a line defines a plane through its camera center and
the observed segment.  Both anchor endpoints must lie on every such plane;
for an endpoint ray ``X = p / lambda`` the plane equation is linear in the
depth ``1 / lambda``, so the over-determined system splits into two scalar
least-squares problems.

The classical dual Plücker-matrix construction is kept as a baseline.  It
silently returns a meaningless direction when the two views differ only by a
rotation, while the plane method reports the degeneracy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    BehindCameraError,
    GeometryError,
    InsufficientParallaxError,
    RotationOnlyDegenerateError,
)
from .geometry import EPS_PX, CameraPose, InverseDepthLine, PluckerLine
from .residuals import LineObservation

EPS_ROT = 1e-10
MIN_PARALLAX = 0.01
DEPTH_BOUNDS = (1e-4, 1e4)


@dataclass(frozen=True)
class PlaneGeneral:
    """Plane ``a x + b y + c z + d = 0``."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if np.linalg.norm([self.a, self.b, self.c]) == 0.0:
            raise GeometryError("plane normal vanishes")

    @property
    def normal(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d])

    def origin_distance(self) -> float:
        """Distance from the anchor camera center (the origin) to the plane."""
        return abs(self.d) / np.linalg.norm(self.normal)

    def signed_distance(self, x: np.ndarray) -> float:
        return float((self.normal @ x + self.d) / np.linalg.norm(self.normal))


@dataclass
class LineTrack:
    anchor_frame: int
    anchor_s: np.ndarray
    anchor_e: np.ndarray
    observations: list[LineObservation] = field(default_factory=list)

    def __post_init__(self):
        self.anchor_s = np.asarray(self.anchor_s, dtype=float)
        self.anchor_e = np.asarray(self.anchor_e, dtype=float)
        if np.linalg.norm(self.anchor_s - self.anchor_e) <= EPS_PX:
            raise GeometryError("anchor endpoints coincide")

    @property
    def s(self) -> np.ndarray:
        return np.append(self.anchor_s, 1.0)

    @property
    def e(self) -> np.ndarray:
        return np.append(self.anchor_e, 1.0)


def relative_camera_pose(
    anchor_body: CameraPose, obs_body: CameraPose, extrinsic: CameraPose
) -> CameraPose:
    """Pose of the observing camera expressed in the anchor camera frame."""
    return (anchor_body @ extrinsic).inverse() @ (obs_body @ extrinsic)


def observation_plane(obs: LineObservation, rel_pose: CameraPose) -> PlaneGeneral:
    """Plane through the observing camera center and its observed segment, in anchor coordinates."""
    normal = rel_pose.R @ np.cross(obs.s, obs.e)
    return PlaneGeneral(*normal, -normal @ rel_pose.t)


def anchor_plane(track: LineTrack) -> PlaneGeneral:
    return PlaneGeneral(*np.cross(track.s, track.e), 0.0)


def _check_depths(lam: np.ndarray, bounds: tuple[float, float] | None) -> tuple[float, float]:
    if np.any(lam <= 0):
        raise BehindCameraError(f"solved inverse depth not positive: {lam}")
    if bounds is not None and np.any((lam < bounds[0]) | (lam > bounds[1])):
        raise GeometryError(f"inverse depth outside plausible range {bounds}: {lam}")
    return float(lam[0]), float(lam[1])


def init_inverse_depth_two_view(
    track: LineTrack, rel_pose: CameraPose, *, depth_bounds: tuple[float, float] | None = None
) -> tuple[float, float]:
    """Closed-form ``(lambda_s, lambda_e)`` from the anchor and one other view."""
    if len(track.observations) != 1:
        raise ValueError("two-view initialization needs exactly one non-anchor observation")
    plane = observation_plane(track.observations[0], rel_pose)
    if plane.origin_distance() < EPS_ROT:
        raise RotationOnlyDegenerateError("observation plane contains the anchor camera center")
    lam = np.array([-(plane.normal @ p) / plane.d for p in (track.s, track.e)])
    return _check_depths(lam, depth_bounds)


def usable_planes(
    track: LineTrack, rel_poses: Mapping[int, CameraPose], min_parallax: float = MIN_PARALLAX
) -> list[PlaneGeneral]:
    planes = []
    for obs in track.observations:
        plane = observation_plane(obs, rel_poses[obs.frame_id])
        if plane.origin_distance() > min_parallax:
            planes.append(plane)
    return planes


def init_inverse_depth_multi_view(
    track: LineTrack,
    rel_poses: Mapping[int, CameraPose],
    *,
    min_parallax: float = MIN_PARALLAX,
    depth_bounds: tuple[float, float] | None = None,
    method: str = "linear",
) -> tuple[float, float]:
    """Least-squares ``(lambda_s, lambda_e)`` over every non-degenerate observation plane.

    ``rel_poses`` maps observation frame ids to the observing camera's pose
    in the anchor camera frame.  ``method="nonlinear"`` solves the same
    problem in inverse-depth coordinates with a trust-region solver.
    """
    planes = usable_planes(track, rel_poses, min_parallax)
    if not planes:
        raise InsufficientParallaxError("no observation has enough baseline")
    return fit_inverse_depths(track, planes, depth_bounds=depth_bounds, method=method)


def fit_inverse_depths(
    track: LineTrack,
    planes: Sequence[PlaneGeneral],
    *,
    depth_bounds: tuple[float, float] | None = None,
    method: str = "linear",
) -> tuple[float, float]:
    P = np.array([pl.vector() / np.linalg.norm(pl.normal) for pl in planes])
    n, off = P[:, :3], P[:, 3]
    lam = []
    for p in (track.s, track.e):
        a = n @ p  # distance = a * depth + off
        denom = a @ a
        if denom <= 1e-300:
            raise InsufficientParallaxError("endpoint ray lies in every observation plane")
        depth = -(a @ off) / denom
        lam.append(1.0 / depth if depth > 0 else -1.0)
    lam = np.array(lam)
    if method == "nonlinear":
        from scipy.optimize import least_squares

        start = np.where(lam > 0, lam, 1.0)

        def fun(x):
            return np.concatenate([n @ track.s / x[0] + off, n @ track.e / x[1] + off])

        lam = least_squares(fun, start, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15).x
    elif method != "linear":
        raise ValueError(f"unknown method {method!r}")
    return _check_depths(lam, depth_bounds)


def init_plucker_matrix(track: LineTrack, rel_pose: CameraPose) -> PluckerLine:
    """Baseline: intersect the anchor and observation planes via the dual Plücker matrix.

    No degeneracy check is made.  Under pure rotation both planes pass
    through the anchor center and the returned direction is whatever
    rounding leaves behind.
    """
    if len(track.observations) != 1:
        raise ValueError("Plücker-matrix initialization takes exactly one other view")
    pi1 = anchor_plane(track).vector()
    pi2 = observation_plane(track.observations[0], rel_pose).vector()
    M = np.outer(pi1, pi2) - np.outer(pi2, pi1)
    d = np.array([M[2, 1], M[0, 2], M[1, 0]])
    # for P on both planes, P x (n2 x n1) = n1 D2 - n2 D1, the top-right block
    n = M[:3, 3]
    return PluckerLine.raw(n, d)


def direction_angle_error(estimate: np.ndarray, truth: np.ndarray) -> float:
    """Unsigned angle between two directions; pi/2 when the estimate vanishes."""
    ne, nt = np.linalg.norm(estimate), np.linalg.norm(truth)
    if ne == 0.0 or nt == 0.0:
        return np.pi / 2
    c = abs(estimate @ truth) / (ne * nt)
    return float(np.arccos(min(c, 1.0)))


def initialize_line(
    track: LineTrack,
    rel_poses: Mapping[int, CameraPose],
    *,
    min_parallax: float = MIN_PARALLAX,
    depth_bounds: tuple[float, float] = DEPTH_BOUNDS,
) -> InverseDepthLine:
    lam_s, lam_e = init_inverse_depth_multi_view(
        track, rel_poses, min_parallax=min_parallax, depth_bounds=depth_bounds
    )
    return InverseDepthLine(lam_s, lam_e, track.anchor_s, track.anchor_e)


def init_point_inverse_depth(
    anchor_pixel: np.ndarray, observations: Sequence[tuple[np.ndarray, CameraPose]]
) -> float:
    """Linear triangulation of a point's anchor inverse depth.

    ``observations`` pairs observed normalized pixels with the observing
    camera pose in the anchor camera frame.
    """
    p = np.append(np.asarray(anchor_pixel, dtype=float), 1.0)
    A, b = [], []
    for uv, rel in observations:
        # X_obs = depth * a + c
        a = rel.R.T @ p
        c = -rel.R.T @ rel.t
        for k in range(2):
            A.append(a[k] - uv[k] * a[2])
            b.append(-(c[k] - uv[k] * c[2]))
    A, b = np.array(A), np.array(b)
    denom = A @ A
    if denom <= 1e-300:
        raise InsufficientParallaxError("point has no parallax")
    depth = (A @ b) / denom
    if depth <= 0:
        raise BehindCameraError("triangulated point behind the anchor camera")
    return 1.0 / depth
