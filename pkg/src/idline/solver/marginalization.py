"""Schur-complement marginalization of window frames."""

from __future__ import annotations

import numpy as np

from ..errors import GeometryError
from ..geometry import inverse_depth_from_plucker, invert_transform_line
from ..residuals import odometry_jacobians, odometry_residual
from .state import (
    FactorGraph,
    LineFeature,
    MarginalPrior,
    PointFeature,
    SlidingWindowState,
    VarKey,
    prior_residual,
    var_dim,
)

EIG_RTOL = 1e-12


def _foot_on_line(l: np.ndarray, uv: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a normalized pixel onto the image line ``l``."""
    p = np.append(uv, 1.0)
    g = l[:2]
    return np.asarray(uv, dtype=float) - (l @ p) / (g @ g) * g


def _reanchor_point(state: SlidingWindowState, fid: int, frame: int) -> PointFeature | None:
    X = state.world_point(fid)
    Xc = state.camera_pose(frame).apply_inverse(X)
    if Xc[2] <= 1e-8:
        return None
    return PointFeature(frame, Xc[:2] / Xc[2], 1.0 / Xc[2])


def _reanchor_line(state: SlidingWindowState, fid: int, frame: int, graph: FactorGraph):
    """Express the current line exactly in ``frame``, anchoring at the feet of that frame's observation."""
    obs = next(f.obs for f in graph.lines if f.feature_id == fid and f.frame_id == frame)
    Lc = invert_transform_line(state.world_line(fid), state.camera_pose(frame))
    l = Lc.n  # normalized intrinsics: K_L = I
    if np.hypot(l[0], l[1]) <= 1e-12 * np.linalg.norm(l):
        return None
    try:
        line = inverse_depth_from_plucker(Lc, _foot_on_line(l, obs.s_obs), _foot_on_line(l, obs.e_obs))
    except GeometryError:
        return None
    return LineFeature(frame, line)


def remove_frame_visuals(
    graph: FactorGraph, state: SlidingWindowState, frame: int
) -> tuple[FactorGraph, SlidingWindowState]:
    """Drop ``frame``'s visual factors and re-anchor or drop the affected features.

    A feature anchored at ``frame`` moves to its earliest other observing
    frame.  Features left with fewer than two observing frames are removed.
    """
    graph = graph.copy()
    state = state.copy()
    for kind, _, feats in (
        ("point", graph.points, state.points),
        ("line", graph.lines, state.lines),
        ("oline", graph.lines, state.ortho_lines),
    ):
        for fid in sorted(feats):
            anchor = getattr(feats[fid], "anchor_frame", None)
            frames = set(graph.observing_frames("point" if kind == "point" else "line", fid))
            if anchor is not None:
                frames.add(anchor)
            remaining = sorted(f for f in frames if f != frame and f in state.poses)
            keep = len(remaining) >= 2
            if keep and anchor == frame:
                new = (
                    _reanchor_point(state, fid, remaining[0])
                    if kind == "point"
                    else _reanchor_line(state, fid, remaining[0], graph)
                )
                if new is None:
                    keep = False
                else:
                    feats[fid] = new
            if not keep:
                del feats[fid]
    graph.points = [f for f in graph.points if f.frame_id != frame and f.feature_id in state.points]
    graph.lines = [
        f
        for f in graph.lines
        if f.frame_id != frame and (f.feature_id in state.lines or f.feature_id in state.ortho_lines)
    ]
    return graph, state


def _local_system(graph: FactorGraph, state: SlidingWindowState, frame: int, frozen: bool):
    """Stack residuals/Jacobians of the odometry touching ``frame`` and the current prior.

    Returns ``(keys, dims, J, r, offset, odometry_kept)`` with the
    marginalized pose (if variable) first in ``keys``.
    """
    mkey = ("pose", frame)
    touching = [f for f in graph.odometry if frame in (f.frame_i, f.frame_j)]
    kept = [f for f in graph.odometry if frame not in (f.frame_i, f.frame_j)]
    keys: list[VarKey] = [] if frozen else [mkey]

    def add_key(k):
        if k not in keys and not (frozen and k == mkey):
            keys.append(k)

    for f in touching:
        add_key(("pose", f.frame_i))
        add_key(("pose", f.frame_j))
    prior = state.prior
    if prior is not None:
        for k in prior.keys:
            add_key(k)
    dims = [var_dim(k, state) for k in keys]
    offs = np.concatenate([[0], np.cumsum(dims)]).astype(int)
    col = {k: offs[i] for i, k in enumerate(keys)}
    rows_J, rows_r = [], []
    offset = 0.0
    for f in touching:
        pi, pj = state.pose(f.frame_i), state.pose(f.frame_j)
        r = odometry_residual(f, pi, pj)
        Ji, Jj = odometry_jacobians(f, pi, pj)
        J = np.zeros((6, offs[-1]))
        for k, Jk in ((("pose", f.frame_i), Ji), (("pose", f.frame_j), Jj)):
            if k in col:
                J[:, col[k] : col[k] + 6] += Jk
        rows_J.append(J)
        rows_r.append(r)
    if prior is not None and prior.J_p.size:
        J = np.zeros((prior.J_p.shape[0], offs[-1]))
        pc = 0
        for k in prior.keys:
            d = var_dim(k, state)
            if k in col:
                J[:, col[k] : col[k] + d] = prior.J_p[:, pc : pc + d]
            pc += d
        rows_J.append(J)
        rows_r.append(prior_residual(prior, state))
        offset += prior.cost_offset
    if rows_J:
        J, r = np.vstack(rows_J), np.concatenate(rows_r)
    else:
        J, r = np.zeros((0, offs[-1])), np.zeros(0)
    return keys, dims, J, r, offset, kept


def schur_prior(
    keys: list[VarKey],
    dims: list[int],
    J: np.ndarray,
    r: np.ndarray,
    offset: float,
    n_marg: int,
    state: SlidingWindowState,
) -> MarginalPrior | None:
    """Eliminate the first ``n_marg`` columns of ``|r + J dx|^2 + offset``.

    The retained quadratic is factored as ``|r_p + J_p dx|^2 + cost_offset``
    through an eigendecomposition of the Schur complement, so the prior
    evaluated at the linearization point equals the eliminated system's
    marginal cost.
    """
    H = J.T @ J
    g = J.T @ r
    c = float(r @ r) + offset
    m = n_marg
    Hmm, Hmr, Hrr = H[:m, :m], H[:m, m:], H[m:, m:]
    gm, gr = g[:m], g[m:]
    if m:
        Hmm_inv = np.linalg.pinv(0.5 * (Hmm + Hmm.T))
        Hs = Hrr - Hmr.T @ Hmm_inv @ Hmr
        gs = gr - Hmr.T @ Hmm_inv @ gm
        c -= float(gm @ Hmm_inv @ gm)
    else:
        Hs, gs = Hrr, gr
    rkeys = keys[1:] if m else list(keys)
    if not rkeys:
        return None
    w, V = np.linalg.eigh(0.5 * (Hs + Hs.T))
    keep = w > EIG_RTOL * max(w.max(initial=0.0), 1e-300)
    if not np.any(keep):
        return None
    w, V = w[keep], V[:, keep]
    sw = np.sqrt(w)
    J_p = sw[:, None] * V.T
    r_p = (V.T @ gs) / sw
    cost_offset = max(c - float(r_p @ r_p), 0.0)
    lin = {k: state.value(k) for k in rkeys}
    return MarginalPrior(rkeys, J_p, r_p, lin, cost_offset)


def marginalize_frame(
    graph: FactorGraph, state: SlidingWindowState, frame: int
) -> tuple[FactorGraph, SlidingWindowState]:
    """Remove ``frame`` from the window, folding its odometry and prior into a new prior.

    Visual factors observed in the frame are dropped rather than
    marginalized; features anchored there are re-expressed in their next
    observing frame (see :func:`remove_frame_visuals`).  A frame frozen as
    the gauge (first pose, no prior) is conditioned on instead of
    eliminated.
    """
    frozen = state.prior is None and state.frame_ids and state.frame_ids[0] == frame
    keys, dims, J, r, offset, kept = _local_system(graph, state, frame, bool(frozen))
    n_marg = 0 if frozen else 6
    prior = schur_prior(keys, dims, J, r, offset, n_marg, state)
    graph, state = remove_frame_visuals(graph, state, frame)
    graph.odometry = kept
    state.frame_ids = [f for f in state.frame_ids if f != frame]
    del state.poses[frame]
    state.prior = prior
    return graph, state


def marginalize_oldest(
    graph: FactorGraph, state: SlidingWindowState, *, window_size: int | None = None
) -> tuple[FactorGraph, SlidingWindowState]:
    """Marginalize the oldest keyframe; no-op if the window is below ``window_size``."""
    if len(state.frame_ids) < 2:
        return graph, state
    if window_size is not None and len(state.frame_ids) < window_size:
        return graph, state
    return marginalize_frame(graph, state, state.frame_ids[0])


def prior_information(prior: MarginalPrior | None) -> np.ndarray:
    if prior is None:
        return np.zeros((0, 0))
    return prior.information()

