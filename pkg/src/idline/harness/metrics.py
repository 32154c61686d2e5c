"""Trajectory error metrics (ATE / RPE) with rigid alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import CameraPose
from ..lie import so3_log


@dataclass
class Trajectory:
    """Poses ordered by a strictly increasing integer index (frame id or timestamp)."""

    indices: np.ndarray
    poses: list[CameraPose]

    def __post_init__(self):
        self.indices = np.asarray(self.indices)
        if self.indices.ndim != 1 or len(self.indices) != len(self.poses):
            raise ValueError("indices and poses must have equal length")
        if len(self.indices) > 1 and np.any(np.diff(self.indices) <= 0):
            raise ValueError("trajectory indices must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def from_state(cls, state) -> Trajectory:
        return cls(np.array(state.frame_ids), [state.poses[k] for k in state.frame_ids])

    @classmethod
    def from_world(cls, world, frames=None) -> Trajectory:
        frames = list(range(world.n_frames)) if frames is None else list(frames)
        return cls(np.array(frames), [world.poses[k] for k in frames])

    def positions(self) -> np.ndarray:
        return np.array([p.t for p in self.poses]).reshape(-1, 3)

    def transformed(self, T: CameraPose) -> Trajectory:
        """Left-multiply every pose by ``T`` (a change of world frame)."""
        return Trajectory(self.indices.copy(), [T @ p for p in self.poses])


def _check_pair(estimate: Trajectory, truth: Trajectory) -> None:
    if len(estimate) != len(truth):
        raise ValueError(f"trajectory lengths differ: {len(estimate)} vs {len(truth)}")
    if not np.array_equal(estimate.indices, truth.indices):
        raise ValueError("trajectory indices do not match")


def umeyama_se3(src: np.ndarray, dst: np.ndarray) -> CameraPose:
    """Rigid transform ``T`` minimizing ``sum |dst_i - T src_i|^2`` (no scale)."""
    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    C = (dst - mu_d).T @ (src - mu_s) / len(src)
    U, _, Vt = np.linalg.svd(C)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    return CameraPose(R, mu_d - R @ mu_s)


def ate_rmse(estimate: Trajectory, truth: Trajectory, align: bool = True) -> float:
    _check_pair(estimate, truth)
    if len(estimate) == 0:
        raise ValueError("empty trajectory")
    est, gt = estimate.positions(), truth.positions()
    if align:
        # a single point fixes translation only; rotation stays identity
        T = umeyama_se3(est, gt) if len(est) > 1 else CameraPose(np.eye(3), gt[0] - est[0])
        est = est @ T.R.T + T.t
    return float(np.sqrt(np.mean(np.sum((est - gt) ** 2, axis=1))))


def relative_errors(estimate: Trajectory, truth: Trajectory, delta: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Per-pair translation and rotation magnitudes of the relative-pose discrepancy."""
    _check_pair(estimate, truth)
    if delta < 1:
        raise ValueError("delta must be at least 1")
    if len(estimate) <= delta:
        raise ValueError(f"trajectory of length {len(estimate)} too short for delta {delta}")
    et, er = [], []
    for i in range(len(estimate) - delta):
        rel_gt = truth.poses[i].inverse() @ truth.poses[i + delta]
        rel_est = estimate.poses[i].inverse() @ estimate.poses[i + delta]
        E = rel_gt.inverse() @ rel_est
        et.append(np.linalg.norm(E.t))
        er.append(np.linalg.norm(so3_log(E.R)))
    return np.array(et), np.array(er)


def rpe(estimate: Trajectory, truth: Trajectory, delta: int = 1) -> tuple[float, float]:
    """Translation and rotation RMSE of relative poses ``delta`` frames apart."""
    et, er = relative_errors(estimate, truth, delta)
    return float(np.sqrt(np.mean(et**2))), float(np.sqrt(np.mean(er**2)))
