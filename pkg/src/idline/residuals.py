"""Reprojection residuals and their analytic Jacobians.

This is the single-factor reference path.  The solver evaluates factors in
batches through :mod:`idline.kernels`; both are checked against each other
and against finite differences in the test suite.

Frame chain for a line anchored in camera ``i`` and observed in camera ``j``::

    L_cj = T_bc^-1  T_wbj^-1  T_wbi  T_bc  L_ci

with ``T_wb*`` body poses and ``T_bc`` the body-from-camera extrinsic.  Pose
Jacobian columns are ordered ``(dt, dphi)``; rotations are perturbed on the
right and translations additively.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, DegenerateProjectionError, GeometryError
from .geometry import (
    EPS_DEG,
    EPS_PX,
    CameraPose,
    InverseDepthLine,
    OrthonormalLine,
    PluckerLine,
    inverse_line_motion_matrix,
    invert_transform_line,
    line_motion_matrix,
    plucker_from_inverse_depth,
    plucker_from_orthonormal,
    transform_line,
)
from .lie import right_jacobian_inv, skew, so3_log


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError("focal lengths must be positive")

    @classmethod
    def normalized(cls) -> CameraIntrinsics:
        """Intrinsics of the normalized image plane (``K_L`` is the identity)."""
        return cls(1.0, 1.0, 0.0, 0.0)

    def line_projection_matrix(self) -> np.ndarray:
        fx, fy, cx, cy = self.fx, self.fy, self.cx, self.cy
        return np.array([[fy, 0.0, 0.0], [0.0, fx, 0.0], [-fy * cx, -fx * cy, fx * fy]])

    def to_normalized(self, px: np.ndarray) -> np.ndarray:
        px = np.asarray(px, dtype=float)
        return np.stack([(px[..., 0] - self.cx) / self.fx, (px[..., 1] - self.cy) / self.fy], axis=-1)

    def to_pixels(self, uv: np.ndarray) -> np.ndarray:
        uv = np.asarray(uv, dtype=float)
        return np.stack([uv[..., 0] * self.fx + self.cx, uv[..., 1] * self.fy + self.cy], axis=-1)


@dataclass(frozen=True)
class LineObservation:
    """Observed segment endpoints in one frame, in the coordinates ``K`` describes."""

    frame_id: int
    s_obs: np.ndarray
    e_obs: np.ndarray

    def __post_init__(self):
        s = np.array(self.s_obs, dtype=float).reshape(2)
        e = np.array(self.e_obs, dtype=float).reshape(2)
        s.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "s_obs", s)
        object.__setattr__(self, "e_obs", e)
        if np.linalg.norm(s - e) <= EPS_PX:
            raise GeometryError("observed endpoints coincide")

    @property
    def s(self) -> np.ndarray:
        return np.append(self.s_obs, 1.0)

    @property
    def e(self) -> np.ndarray:
        return np.append(self.e_obs, 1.0)


@dataclass(frozen=True)
class ProjectedLine:
    l: np.ndarray

    def __post_init__(self):
        l = np.array(self.l, dtype=float).reshape(3)
        l.setflags(write=False)
        object.__setattr__(self, "l", l)
        if np.hypot(l[0], l[1]) <= EPS_DEG * max(np.linalg.norm(l), 1e-300):
            raise DegenerateProjectionError("line projects to a point")


@dataclass(frozen=True)
class OdometryFactor:
    """Relative-pose measurement ``T_i^-1 T_j`` with a 6x6 square-root information."""

    frame_i: int
    frame_j: int
    rel_pose_meas: CameraPose
    sqrt_info: np.ndarray

    def __post_init__(self):
        S = np.array(self.sqrt_info, dtype=float).reshape(6, 6)
        S.setflags(write=False)
        object.__setattr__(self, "sqrt_info", S)


@dataclass
class LineJacobians:
    anchor: np.ndarray  # 2x6
    obs: np.ndarray  # 2x6
    extrinsic: np.ndarray  # 2x6
    lam: np.ndarray  # 2x2, columns (lambda_s, lambda_e)


@dataclass
class PointJacobians:
    anchor: np.ndarray  # 2x6
    obs: np.ndarray  # 2x6
    extrinsic: np.ndarray  # 2x6
    inv_depth: np.ndarray  # 2x1


# --- appendix factors -------------------------------------------------------


def residual_wrt_image_line(l: np.ndarray, s: np.ndarray, e: np.ndarray) -> np.ndarray:
    """d r / d l (2x3) for homogeneous observed endpoints ``s``, ``e``."""
    q = l[0] ** 2 + l[1] ** 2
    rows = []
    for p in (s, e):
        pl = p @ l
        rows.append([-l[0] * pl / q + p[0], -l[1] * pl / q + p[1], p[2]])
    return np.array(rows) / np.sqrt(q)


def image_line_wrt_plucker(K: CameraIntrinsics) -> np.ndarray:
    """d l / d L = [K_L, 0] (3x6)."""
    return np.hstack([K.line_projection_matrix(), np.zeros((3, 3))])


def plucker_wrt_inverse_depth(line: InverseDepthLine) -> np.ndarray:
    """d L / d(lambda_s, lambda_e) (6x2)."""
    ls, le = line.lambda_s, line.lambda_e
    s, e = line.s, line.e
    sxe = np.cross(s, e)
    J = np.zeros((6, 2))
    J[:3, 0] = -sxe / (ls**2 * le)
    J[3:, 0] = s / ls**2
    J[:3, 1] = -sxe / (le**2 * ls)
    J[3:, 1] = -e / le**2
    return J


def plucker_wrt_orthonormal(line: OrthonormalLine) -> np.ndarray:
    """d L / d(dtheta3, dtheta1) (6x4) for ``U <- U exp(dtheta3)``, ``theta1 <- theta1 + dtheta1``."""
    U = line.U
    w1, w2 = line.omega
    u1, u2, u3 = U.T
    J = np.zeros((6, 4))
    J[:3, 1] = -w1 * u3
    J[:3, 2] = w1 * u2
    J[:3, 3] = -w2 * u1
    J[3:, 0] = w2 * u3
    J[3:, 2] = -w2 * u1
    J[3:, 3] = w1 * u2
    return J


def transform_wrt_pose(line: PluckerLine, pose: CameraPose) -> np.ndarray:
    """d transform_line(line, pose) / d(dt, dphi) (6x6)."""
    R, t = pose.R, pose.t
    Rd = R @ line.d
    J = np.zeros((6, 6))
    J[:3, :3] = -skew(Rd)
    J[:3, 3:] = -R @ skew(line.n) - skew(t) @ R @ skew(line.d)
    J[3:, 3:] = -R @ skew(line.d)
    return J


def inverse_transform_wrt_pose(line: PluckerLine, pose: CameraPose) -> np.ndarray:
    """d invert_transform_line(line, pose) / d(dt, dphi) (6x6).

    Rotation block is ``[[R^T(n + [d]x t)]x ; [R^T d]x]``, translation block
    ``[R^T [d]x ; 0]``.
    """
    R, t = pose.R, pose.t
    n_new = R.T @ (line.n - np.cross(t, line.d))
    d_new = R.T @ line.d
    J = np.zeros((6, 6))
    J[:3, :3] = R.T @ skew(line.d)
    J[:3, 3:] = skew(n_new)
    J[3:, 3:] = skew(d_new)
    return J


# --- lines --------------------------------------------------------------------


def project_line(line_in_frame: PluckerLine, K: CameraIntrinsics) -> ProjectedLine:
    return ProjectedLine(K.line_projection_matrix() @ line_in_frame.n)


def _line_chain(line_anchor, pose_anchor, pose_obs, extrinsic):
    L0 = plucker_from_inverse_depth(line_anchor)
    L1 = transform_line(L0, extrinsic)
    L2 = transform_line(L1, pose_anchor)
    L3 = invert_transform_line(L2, pose_obs)
    L4 = invert_transform_line(L3, extrinsic)
    return L0, L1, L2, L3, L4


def _point_line_distances(l: np.ndarray, obs: LineObservation) -> np.ndarray:
    return np.array([obs.s @ l, obs.e @ l]) / np.hypot(l[0], l[1])


def line_residual(
    line_anchor: InverseDepthLine,
    pose_anchor: CameraPose,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs: LineObservation,
    K: CameraIntrinsics,
) -> np.ndarray:
    """Signed distances of the observed endpoints to the reprojected line."""
    *_, L4 = _line_chain(line_anchor, pose_anchor, pose_obs, extrinsic)
    return _point_line_distances(project_line(L4, K).l, obs)


def line_jacobians(
    line_anchor: InverseDepthLine,
    pose_anchor: CameraPose,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs: LineObservation,
    K: CameraIntrinsics,
) -> LineJacobians:
    L0, L1, L2, L3, L4 = _line_chain(line_anchor, pose_anchor, pose_obs, extrinsic)
    l = project_line(L4, K).l
    A = residual_wrt_image_line(l, obs.s, obs.e) @ image_line_wrt_plucker(K)  # 2x6

    Gc = inverse_line_motion_matrix(extrinsic)
    Gj = inverse_line_motion_matrix(pose_obs)
    Fi = line_motion_matrix(pose_anchor)
    Fc = line_motion_matrix(extrinsic)
    to_obs = Gc @ Gj  # world -> observing camera
    return LineJacobians(
        anchor=A @ to_obs @ transform_wrt_pose(L1, pose_anchor),
        obs=A @ Gc @ inverse_transform_wrt_pose(L2, pose_obs),
        extrinsic=A
        @ (to_obs @ Fi @ transform_wrt_pose(L0, extrinsic) + inverse_transform_wrt_pose(L3, extrinsic)),
        lam=A @ to_obs @ Fi @ Fc @ plucker_wrt_inverse_depth(line_anchor),
    )


def orthonormal_line_residual(
    line_world: OrthonormalLine,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs: LineObservation,
    K: CameraIntrinsics,
) -> np.ndarray:
    """Residual for a world-frame line in the 4-parameter baseline encoding."""
    L = invert_transform_line(invert_transform_line(plucker_from_orthonormal(line_world), pose_obs), extrinsic)
    return _point_line_distances(project_line(L, K).l, obs)


def orthonormal_line_jacobians(
    line_world: OrthonormalLine,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs: LineObservation,
    K: CameraIntrinsics,
) -> dict[str, np.ndarray]:
    Lw = plucker_from_orthonormal(line_world)
    Lb = invert_transform_line(Lw, pose_obs)
    Lc = invert_transform_line(Lb, extrinsic)
    l = project_line(Lc, K).l
    A = residual_wrt_image_line(l, obs.s, obs.e) @ image_line_wrt_plucker(K)
    Gc = inverse_line_motion_matrix(extrinsic)
    Gj = inverse_line_motion_matrix(pose_obs)
    return {
        "obs": A @ Gc @ inverse_transform_wrt_pose(Lw, pose_obs),
        "extrinsic": A @ inverse_transform_wrt_pose(Lb, extrinsic),
        "line": A @ Gc @ Gj @ plucker_wrt_orthonormal(line_world),
    }


# --- points -------------------------------------------------------------------


def _point_chain(inv_depth, anchor_pixel, pose_anchor, pose_obs, extrinsic):
    P0 = np.append(np.asarray(anchor_pixel, dtype=float), 1.0) / inv_depth
    P1 = extrinsic.apply(P0)
    P2 = pose_anchor.apply(P1)
    P3 = pose_obs.apply_inverse(P2)
    P4 = extrinsic.apply_inverse(P3)
    return P0, P1, P2, P3, P4


def point_residual(
    inv_depth: float,
    anchor_pixel: np.ndarray,
    pose_anchor: CameraPose,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs_pixel: np.ndarray,
) -> np.ndarray:
    if not inv_depth > 0:
        raise BehindCameraError("point inverse depth must be positive")
    *_, P4 = _point_chain(inv_depth, anchor_pixel, pose_anchor, pose_obs, extrinsic)
    if P4[2] <= EPS_DEG:
        raise BehindCameraError("point reprojects behind the observing camera")
    return P4[:2] / P4[2] - np.asarray(obs_pixel, dtype=float)


def point_jacobians(
    inv_depth: float,
    anchor_pixel: np.ndarray,
    pose_anchor: CameraPose,
    pose_obs: CameraPose,
    extrinsic: CameraPose,
    obs_pixel: np.ndarray,
) -> PointJacobians:
    P0, P1, P2, P3, P4 = _point_chain(inv_depth, anchor_pixel, pose_anchor, pose_obs, extrinsic)
    x, y, z = P4
    D = np.array([[1.0 / z, 0.0, -x / z**2], [0.0, 1.0 / z, -y / z**2]])
    Rc, Ri, Rj = extrinsic.R, pose_anchor.R, pose_obs.R
    to_obs = D @ Rc.T @ Rj.T  # world -> residual

    J_i = np.hstack([to_obs, -to_obs @ Ri @ skew(P1)])
    J_j = D @ Rc.T @ np.hstack([-Rj.T, skew(P3)])
    via_anchor = to_obs @ Ri @ np.hstack([np.eye(3), -Rc @ skew(P0)])
    via_obs = D @ np.hstack([-Rc.T, skew(P4)])
    p = np.append(np.asarray(anchor_pixel, dtype=float), 1.0)
    J_lam = to_obs @ Ri @ Rc @ (-p / inv_depth**2)
    return PointJacobians(anchor=J_i, obs=J_j, extrinsic=via_anchor + via_obs, inv_depth=J_lam[:, None])


# --- odometry -----------------------------------------------------------------


def _odometry_error(factor: OdometryFactor, pose_i: CameraPose, pose_j: CameraPose):
    rel = pose_i.inverse() @ pose_j
    Z = factor.rel_pose_meas
    R_E = Z.R.T @ rel.R
    t_E = Z.R.T @ (rel.t - Z.t)
    return rel, t_E, so3_log(R_E)


def odometry_residual(factor: OdometryFactor, pose_i: CameraPose, pose_j: CameraPose) -> np.ndarray:
    """``sqrt_info @ [t_E; Log R_E]`` with ``E = Z^-1 (T_i^-1 T_j)``."""
    _, t_E, phi_E = _odometry_error(factor, pose_i, pose_j)
    return factor.sqrt_info @ np.concatenate([t_E, phi_E])


def odometry_jacobians(
    factor: OdometryFactor, pose_i: CameraPose, pose_j: CameraPose
) -> tuple[np.ndarray, np.ndarray]:
    rel, _, phi_E = _odometry_error(factor, pose_i, pose_j)
    RZt = factor.rel_pose_meas.R.T
    Ri_t = pose_i.R.T
    Jr_inv = right_jacobian_inv(phi_E)
    J_i = np.zeros((6, 6))
    J_j = np.zeros((6, 6))
    J_i[:3, :3] = -RZt @ Ri_t
    J_i[:3, 3:] = RZt @ skew(rel.t)
    J_i[3:, 3:] = -Jr_inv @ rel.R.T
    J_j[:3, :3] = RZt @ Ri_t
    J_j[3:, 3:] = Jr_inv
    S = factor.sqrt_info
    return S @ J_i, S @ J_j


# --- robust loss --------------------------------------------------------------


def cauchy(s, c: float = 1.0):
    """Cauchy loss on a squared norm: returns ``(rho(s), rho'(s))``."""
    c2 = c * c
    s = np.asarray(s, dtype=float)
    return c2 * np.log1p(s / c2), 1.0 / (1.0 + s / c2)
