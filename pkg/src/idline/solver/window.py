"""Keyframe window policy: marginalize the oldest frame or drop the second newest."""

from __future__ import annotations

import numpy as np

from ..lie import skew
from ..residuals import OdometryFactor
from .marginalization import marginalize_frame, marginalize_oldest, remove_frame_visuals
from .state import WINDOW_SIZE, FactorGraph, SlidingWindowState


def compose_odometry(first: OdometryFactor, second: OdometryFactor) -> OdometryFactor:
    """Chain ``i -> k`` and ``k -> j`` into ``i -> j`` with first-order covariance propagation.

    The error of the first factor enters the composed error through
    ``[[R2^T, -R2^T [t2]x], [0, R2^T]]`` where ``(R2, t2)`` is the second
    measurement; the second factor's error enters unchanged.
    """
    if first.frame_j != second.frame_i:
        raise ValueError("odometry factors do not chain")
    Z1, Z2 = first.rel_pose_meas, second.rel_pose_meas
    R2t = Z2.R.T
    A = np.zeros((6, 6))
    A[:3, :3] = R2t
    A[:3, 3:] = -R2t @ skew(Z2.t)
    A[3:, 3:] = R2t
    cov1 = np.linalg.inv(first.sqrt_info.T @ first.sqrt_info)
    cov2 = np.linalg.inv(second.sqrt_info.T @ second.sqrt_info)
    cov = A @ cov1 @ A.T + cov2
    info = np.linalg.inv(0.5 * (cov + cov.T))
    sqrt_info = np.linalg.cholesky(0.5 * (info + info.T)).T
    return OdometryFactor(first.frame_i, second.frame_j, Z1 @ Z2, sqrt_info)


def drop_frame(
    graph: FactorGraph, state: SlidingWindowState, frame: int
) -> tuple[FactorGraph, SlidingWindowState]:
    """Discard a non-keyframe: drop its visual factors and bridge its odometry."""
    involved = state.prior is not None and ("pose", frame) in state.prior.keys
    if involved or frame == state.frame_ids[0]:
        # the prior already depends on this pose; eliminate it properly
        return marginalize_frame(graph, state, frame)
    graph, state = remove_frame_visuals(graph, state, frame)
    into = [f for f in graph.odometry if f.frame_j == frame]
    out = [f for f in graph.odometry if f.frame_i == frame]
    rest = [f for f in graph.odometry if frame not in (f.frame_i, f.frame_j)]
    if len(into) == 1 and len(out) == 1:
        rest.append(compose_odometry(into[0], out[0]))
    rest.sort(key=lambda f: (f.frame_i, f.frame_j))
    graph.odometry = rest
    state.frame_ids = [f for f in state.frame_ids if f != frame]
    del state.poses[frame]
    return graph, state


def second_newest_policy(
    graph: FactorGraph,
    state: SlidingWindowState,
    is_keyframe: bool,
    *,
    window_size: int = WINDOW_SIZE,
) -> tuple[FactorGraph, SlidingWindowState, str]:
    """Window maintenance after a new frame has been appended.

    ``is_keyframe`` refers to the second-newest frame.  A keyframe keeps
    its measurements and, if the window overflows, the oldest frame is
    marginalized; otherwise the second-newest frame is discarded.
    Returns the action taken: ``"marginalize_oldest"``, ``"drop_second_newest"``
    or ``"none"``.
    """
    if len(state.frame_ids) < 3:
        return graph, state, "none"
    if is_keyframe:
        if len(state.frame_ids) > window_size:
            graph, state = marginalize_oldest(graph, state)
            return graph, state, "marginalize_oldest"
        return graph, state, "none"
    graph, state = drop_frame(graph, state, state.frame_ids[-2])
    return graph, state, "drop_second_newest"


def window_invariants_hold(
    graph: FactorGraph, state: SlidingWindowState, window_size: int = WINDOW_SIZE
) -> bool:
    if len(state.frame_ids) > window_size:
        return False
    try:
        graph.validate(state)
    except KeyError:
        return False
    for feat in list(state.points.values()) + list(state.lines.values()):
        if feat.anchor_frame not in state.poses:
            return False
    return all(p.inv_depth > 0 for p in state.points.values())

