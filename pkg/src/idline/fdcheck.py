"""Central finite-difference checks of every analytic Jacobian block."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import residuals as res
from .geometry import (
    CameraPose,
    InverseDepthLine,
    invert_transform_line,
    orthonormal_from_plucker,
    plucker_from_inverse_depth,
    transform_line,
)
from .lie import random_rotation, so3_exp

FD_STEP = 1e-6
ABS_FLOOR = 1e-8


def numerical_jacobian(
    f: Callable[[np.ndarray], np.ndarray], dim: int, h: float = FD_STEP
) -> np.ndarray:
    """Central differences of ``f(delta)`` at ``delta = 0``."""
    cols = []
    for k in range(dim):
        e = np.zeros(dim)
        e[k] = h
        cols.append((np.asarray(f(e)) - np.asarray(f(-e))) / (2 * h))
    return np.column_stack(cols)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR) -> float:
    return float(np.max(np.abs(analytic - numeric)) / max(np.max(np.abs(numeric)), floor))


@dataclass
class LineConfig:
    line: InverseDepthLine
    pose_anchor: CameraPose
    pose_obs: CameraPose
    extrinsic: CameraPose
    obs: res.LineObservation
    K: res.CameraIntrinsics
    point_depth: float
    point_pixel: np.ndarray
    point_obs: np.ndarray
    odo_noise: np.ndarray
    odo_sqrt_info: np.ndarray


def random_config(rng: np.random.Generator, noise: float = 0.01) -> LineConfig:
    """A well-conditioned random anchor/observer pair seeing one line and one point."""
    extrinsic = CameraPose(random_rotation(rng, 0.3), rng.uniform(-0.2, 0.2, 3))
    pose_anchor = CameraPose(random_rotation(rng), rng.uniform(-2, 2, 3))
    while True:
        S = np.array([*rng.uniform(-1.5, 1.5, 2), rng.uniform(2.0, 6.0)])
        E = np.array([*rng.uniform(-1.5, 1.5, 2), rng.uniform(2.0, 6.0)])
        if np.linalg.norm(np.cross(S, E)) > 0.5:
            break
    # observing camera relative to the anchor camera
    rel = CameraPose(so3_exp(rng.normal(scale=0.1, size=3)), rng.uniform(-0.5, 0.5, 3))
    T_wci = pose_anchor @ extrinsic
    T_wcj = T_wci @ rel
    pose_obs = T_wcj @ extrinsic.inverse()

    line = InverseDepthLine(1 / S[2], 1 / E[2], S[:2] / S[2], E[:2] / E[2])
    a, b = rng.uniform(-0.3, 0.3), rng.uniform(0.7, 1.3)
    pts = [rel.apply_inverse(S + u * (E - S)) for u in (a, b)]
    s_obs = pts[0][:2] / pts[0][2] + rng.normal(scale=noise, size=2)
    e_obs = pts[1][:2] / pts[1][2] + rng.normal(scale=noise, size=2)
    K = res.CameraIntrinsics(*rng.uniform(0.8, 1.2, 2), *rng.uniform(-0.05, 0.05, 2))

    P = np.array([*rng.uniform(-1, 1, 2), rng.uniform(2.0, 6.0)])
    Pj = rel.apply_inverse(P)
    return LineConfig(
        line, pose_anchor, pose_obs, extrinsic, res.LineObservation(1, s_obs, e_obs), K,
        P[2], P[:2] / P[2], Pj[:2] / Pj[2] + rng.normal(scale=noise, size=2),
        rng.normal(scale=0.05, size=6), np.triu(rng.normal(size=(6, 6))) + 3 * np.eye(6),
    )


@dataclass
class JacobianReport:
    n_configs: int
    max_error: dict[str, float] = field(default_factory=dict)

    def update(self, name: str, err: float) -> None:
        self.max_error[name] = max(self.max_error.get(name, 0.0), err)

    @property
    def worst(self) -> float:
        return max(self.max_error.values()) if self.max_error else 0.0


def check_config(cfg: LineConfig, report: JacobianReport) -> None:
    line, Pi, Pj, Tbc, obs, K = cfg.line, cfg.pose_anchor, cfg.pose_obs, cfg.extrinsic, cfg.obs, cfg.K

    def line_r(line=line, Pi=Pi, Pj=Pj, Tbc=Tbc):
        return res.line_residual(line, Pi, Pj, Tbc, obs, K)

    J = res.line_jacobians(line, Pi, Pj, Tbc, obs, K)
    blocks = {
        "line/anchor": (J.anchor, lambda d: line_r(Pi=Pi.plus(d)), 6),
        "line/obs": (J.obs, lambda d: line_r(Pj=Pj.plus(d)), 6),
        "line/extrinsic": (J.extrinsic, lambda d: line_r(Tbc=Tbc.plus(d)), 6),
        "line/lambda": (
            J.lam,
            lambda d: line_r(line=line.with_depths(line.lambda_s + d[0], line.lambda_e + d[1])),
            2,
        ),
    }

    # appendix factors individually
    L_world = transform_line(transform_line(plucker_from_inverse_depth(line), Tbc), Pi)
    L_body = invert_transform_line(L_world, Pj)
    L_cam = invert_transform_line(L_body, Tbc)
    l = res.project_line(L_cam, K).l
    blocks["dr/dl"] = (
        res.residual_wrt_image_line(l, obs.s, obs.e),
        lambda d: np.array([obs.s @ (l + d), obs.e @ (l + d)]) / np.hypot(*(l + d)[:2]),
        3,
    )
    blocks["dl/dL"] = (
        res.image_line_wrt_plucker(K),
        lambda d: K.line_projection_matrix() @ (L_cam.n + d[:3]),
        6,
    )
    inv_pose = res.inverse_transform_wrt_pose(L_world, Pj)
    blocks["dL/ddtheta"] = (
        inv_pose[:, 3:],
        lambda d: invert_transform_line(L_world, Pj.plus(np.r_[0, 0, 0, d])).vector(),
        3,
    )
    blocks["dL/ddt"] = (
        inv_pose[:, :3],
        lambda d: invert_transform_line(L_world, Pj.plus(np.r_[d, 0, 0, 0])).vector(),
        3,
    )
    L_anchor_body = transform_line(plucker_from_inverse_depth(line), Tbc)
    blocks["dL/dpose(forward)"] = (
        res.transform_wrt_pose(L_anchor_body, Pi),
        lambda d: transform_line(L_anchor_body, Pi.plus(d)).vector(),
        6,
    )
    blocks["dL/ddl"] = (
        res.plucker_wrt_inverse_depth(line),
        lambda d: plucker_from_inverse_depth(
            line.with_depths(line.lambda_s + d[0], line.lambda_e + d[1])
        ).vector(),
        2,
    )

    # orthonormal baseline
    ortho = orthonormal_from_plucker(L_world)
    OJ = res.orthonormal_line_jacobians(ortho, Pj, Tbc, obs, K)

    def ortho_r(o=ortho, Pj=Pj, Tbc=Tbc):
        return res.orthonormal_line_residual(o, Pj, Tbc, obs, K)

    blocks["ortho/obs"] = (OJ["obs"], lambda d: ortho_r(Pj=Pj.plus(d)), 6)
    blocks["ortho/extrinsic"] = (OJ["extrinsic"], lambda d: ortho_r(Tbc=Tbc.plus(d)), 6)
    blocks["ortho/line"] = (OJ["line"], lambda d: ortho_r(o=ortho.plus(d)), 4)

    # points
    lam, px, pobs = 1.0 / cfg.point_depth, cfg.point_pixel, cfg.point_obs

    def point_r(lam=lam, Pi=Pi, Pj=Pj, Tbc=Tbc):
        return res.point_residual(lam, px, Pi, Pj, Tbc, pobs)

    PJ = res.point_jacobians(lam, px, Pi, Pj, Tbc, pobs)
    blocks["point/anchor"] = (PJ.anchor, lambda d: point_r(Pi=Pi.plus(d)), 6)
    blocks["point/obs"] = (PJ.obs, lambda d: point_r(Pj=Pj.plus(d)), 6)
    blocks["point/extrinsic"] = (PJ.extrinsic, lambda d: point_r(Tbc=Tbc.plus(d)), 6)
    blocks["point/inv_depth"] = (PJ.inv_depth, lambda d: point_r(lam=lam + d[0]), 1)

    # odometry between the two body poses, measurement slightly off
    meas = (Pi.inverse() @ Pj).plus(cfg.odo_noise)
    odo = res.OdometryFactor(0, 1, meas, cfg.odo_sqrt_info)
    Ji, Jj = res.odometry_jacobians(odo, Pi, Pj)
    blocks["odometry/i"] = (Ji, lambda d: res.odometry_residual(odo, Pi.plus(d), Pj), 6)
    blocks["odometry/j"] = (Jj, lambda d: res.odometry_residual(odo, Pi, Pj.plus(d)), 6)

    for name, (analytic, f, dim) in blocks.items():
        report.update(name, relative_error(analytic, numerical_jacobian(f, dim)))


def run_jacobian_suite(n_configs: int = 500, seed: int = 0) -> JacobianReport:
    rng = np.random.default_rng(seed)
    report = JacobianReport(n_configs)
    for _ in range(n_configs):
        check_config(random_config(rng), report)
    return report

