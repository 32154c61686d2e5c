"""Batched cost evaluation and normal-equation assembly for a factor graph.

A :class:`Problem` freezes the graph structure (which factor touches which
variable, anchor pixels, whitening) into flat arrays once, so each solver
iteration only gathers the current pose/feature values and calls a factor
kernel.  Dense ``H`` is assembled by scatter-adding per-factor blocks with
``np.bincount``; frozen columns are routed to a dummy slot that is dropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import kernels as default_kernels
from ..errors import BehindCameraError
from ..geometry import OrthonormalLine
from ..residuals import CameraIntrinsics, cauchy, odometry_jacobians, odometry_residual
from .state import FactorGraph, SlidingWindowState, VarKey, prior_residual, var_dim


@dataclass
class TotalCost:
    total: float
    prior: float = 0.0
    odometry: float = 0.0
    point: float = 0.0
    line: float = 0.0
    inactive: int = 0  # visual factors skipped for degenerate projection / depth

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "prior": self.prior,
            "odometry": self.odometry,
            "point": self.point,
            "line": self.line,
        }


class Layout:
    """Column offsets of the optimized variables.

    The first pose is frozen when the state carries no prior (gauge).  Lines
    or points can be left out entirely, which is how the two-step solver
    keeps line columns out of its pose solve.
    """

    def __init__(
        self,
        state: SlidingWindowState,
        *,
        optimize_extrinsic: bool = False,
        include_lines: bool = True,
        include_points: bool = True,
        freeze_first: bool | None = None,
    ):
        if freeze_first is None:
            freeze_first = state.prior is None
        keys: list[VarKey] = []
        for k, fid in enumerate(state.frame_ids):
            if not (k == 0 and freeze_first):
                keys.append(("pose", fid))
        if optimize_extrinsic:
            keys.append(("extrinsic",))
        if include_points:
            keys.extend(("point", fid) for fid in sorted(state.points))
        if include_lines:
            keys.extend(("line", fid) for fid in sorted(state.lines))
            keys.extend(("line", fid) for fid in sorted(state.ortho_lines))
        self.keys = keys
        self.offsets: dict[VarKey, int] = {}
        self.dims: dict[VarKey, int] = {}
        off = 0
        for key in keys:
            self.offsets[key] = off
            self.dims[key] = var_dim(key, state)
            off += self.dims[key]
        self.dim = off

    def cols(self, key: VarKey, size: int) -> np.ndarray:
        """Column indices of ``key`` or ``size`` copies of the dummy slot."""
        off = self.offsets.get(key)
        if off is None:
            return np.full(size, self.dim)
        return off + np.arange(size)

    def line_param_dim(self) -> int:
        return sum(d for k, d in self.dims.items() if k[0] == "line")


def retract(state: SlidingWindowState, layout: Layout, dx: np.ndarray) -> SlidingWindowState:
    """``state (+) dx``; raises ``GeometryError`` if a depth leaves the valid range."""
    out = state.copy()
    for key, off in layout.offsets.items():
        step = dx[off : off + layout.dims[key]]
        kind = key[0]
        if kind == "pose":
            out.poses[key[1]] = state.poses[key[1]].plus(step)
        elif kind == "extrinsic":
            out.extrinsic = state.extrinsic.plus(step)
        elif kind == "point":
            lam = state.points[key[1]].inv_depth + step[0]
            if not lam > 0:
                raise BehindCameraError("point inverse depth left the positive range")
            out.points[key[1]].inv_depth = lam
        elif key[1] in state.ortho_lines:
            out.ortho_lines[key[1]] = state.ortho_lines[key[1]].plus(step)
        else:
            ln = state.lines[key[1]].line
            out.lines[key[1]].line = ln.with_depths(ln.lambda_s + step[0], ln.lambda_e + step[1])
    return out


def _so3_exp_batch(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=1)
    K = np.zeros((len(phi), 3, 3))
    K[:, 0, 1], K[:, 0, 2] = -phi[:, 2], phi[:, 1]
    K[:, 1, 0], K[:, 1, 2] = phi[:, 2], -phi[:, 0]
    K[:, 2, 0], K[:, 2, 1] = -phi[:, 1], phi[:, 0]
    small = theta < 1e-8
    th = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6, np.sin(th) / th)
    b = np.where(small, 0.5 - theta**2 / 24, (1 - np.cos(th)) / th**2)
    return np.eye(3)[None] + a[:, None, None] * K + b[:, None, None] * (K @ K)


def orthonormal_batch(lines: list[OrthonormalLine]) -> tuple[np.ndarray, np.ndarray]:
    """World Plücker vectors (n, 6) and local-parametrization Jacobians (n, 6, 4)."""
    theta3 = np.array([ln.theta3 for ln in lines]).reshape(-1, 3)
    theta1 = np.array([ln.theta1 for ln in lines])
    U = _so3_exp_batch(theta3)
    w1, w2 = np.cos(theta1)[:, None], np.sin(theta1)[:, None]
    u1, u2, u3 = U[:, :, 0], U[:, :, 1], U[:, :, 2]
    L = np.concatenate([w1 * u1, w2 * u2], axis=1)
    J = np.zeros((len(lines), 6, 4))
    J[:, :3, 1] = -w1 * u3
    J[:, :3, 2] = w1 * u2
    J[:, :3, 3] = -w2 * u1
    J[:, 3:, 0] = w2 * u3
    J[:, 3:, 2] = -w2 * u1
    J[:, 3:, 3] = w1 * u2
    return L, J


@dataclass
class _Visual:
    """Static arrays for one family of visual factors."""

    feat_idx: np.ndarray  # index into the sorted feature list
    anchor_frame: np.ndarray  # frame slot of the anchor (-1 for world lines)
    obs_frame: np.ndarray
    obs_a: np.ndarray
    obs_b: np.ndarray | None
    sqrt_info: np.ndarray
    anchor_a: np.ndarray | None = None
    anchor_b: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.feat_idx)


def _stack_sqrt(factors) -> np.ndarray:
    if not factors:
        return np.zeros((0, 2, 2))
    return np.array([np.asarray(f.sqrt_info, dtype=float).reshape(2, 2) for f in factors])


class Problem:
    """Graph structure compiled against a state's feature set and anchors.

    Factors observed in their feature's anchor frame carry no information in
    the anchored representations (the anchor pixels lie on the residual's
    zero set by construction) and are skipped; world-frame orthonormal lines
    keep them.
    """

    def __init__(
        self,
        graph: FactorGraph,
        state: SlidingWindowState,
        *,
        cauchy_scale: float = 1.0,
        intrinsics: CameraIntrinsics | None = None,
        kernels=None,
    ):
        graph.validate(state)
        self.graph = graph
        self.cauchy_scale = cauchy_scale
        self.kernels = kernels or default_kernels
        K = intrinsics or CameraIntrinsics.normalized()
        self.kl = (K.fx, K.fy, K.cx, K.cy)
        self.frame_ids = list(state.frame_ids)
        self.slot = {fid: k for k, fid in enumerate(self.frame_ids)}
        self.point_ids = sorted(state.points)
        self.line_ids = sorted(state.lines)
        self.ortho_ids = sorted(state.ortho_lines)
        self._build_points(graph, state)
        self._build_lines(graph, state)

    # --- static structure ---------------------------------------------------

    def _build_points(self, graph, state):
        index = {fid: k for k, fid in enumerate(self.point_ids)}
        fs = [f for f in graph.points if f.frame_id != state.points[f.feature_id].anchor_frame]
        feats = [state.points[f.feature_id] for f in fs]
        self.pts = _Visual(
            feat_idx=np.array([index[f.feature_id] for f in fs], dtype=int),
            anchor_frame=np.array([self.slot[p.anchor_frame] for p in feats], dtype=int),
            obs_frame=np.array([self.slot[f.frame_id] for f in fs], dtype=int),
            obs_a=np.array([f.obs for f in fs], dtype=float).reshape(-1, 2),
            obs_b=None,
            sqrt_info=_stack_sqrt(fs),
            anchor_a=np.array([p.anchor_pixel for p in feats], dtype=float).reshape(-1, 2),
        )

    def _build_lines(self, graph, state):
        index = {fid: k for k, fid in enumerate(self.line_ids)}
        fs = [
            f
            for f in graph.lines
            if f.feature_id in index and f.frame_id != state.lines[f.feature_id].anchor_frame
        ]
        feats = [state.lines[f.feature_id] for f in fs]
        self.lns = _Visual(
            feat_idx=np.array([index[f.feature_id] for f in fs], dtype=int),
            anchor_frame=np.array([self.slot[ft.anchor_frame] for ft in feats], dtype=int),
            obs_frame=np.array([self.slot[f.frame_id] for f in fs], dtype=int),
            obs_a=np.array([f.obs.s_obs for f in fs], dtype=float).reshape(-1, 2),
            obs_b=np.array([f.obs.e_obs for f in fs], dtype=float).reshape(-1, 2),
            sqrt_info=_stack_sqrt(fs),
            anchor_a=np.array([ft.line.anchor_s for ft in feats], dtype=float).reshape(-1, 2),
            anchor_b=np.array([ft.line.anchor_e for ft in feats], dtype=float).reshape(-1, 2),
        )
        oindex = {fid: k for k, fid in enumerate(self.ortho_ids)}
        fo = [f for f in graph.lines if f.feature_id in oindex]
        self.wln = _Visual(
            feat_idx=np.array([oindex[f.feature_id] for f in fo], dtype=int),
            anchor_frame=np.full(len(fo), -1, dtype=int),
            obs_frame=np.array([self.slot[f.frame_id] for f in fo], dtype=int),
            obs_a=np.array([f.obs.s_obs for f in fo], dtype=float).reshape(-1, 2),
            obs_b=np.array([f.obs.e_obs for f in fo], dtype=float).reshape(-1, 2),
            sqrt_info=_stack_sqrt(fo),
        )

    @property
    def n_line_factors(self) -> int:
        return len(self.lns) + len(self.wln)

    # --- per-iteration gathering -------------------------------------------

    def _poses(self, state):
        R = np.array([state.poses[f].R for f in self.frame_ids]).reshape(-1, 3, 3)
        t = np.array([state.poses[f].t for f in self.frame_ids]).reshape(-1, 3)
        return R, t

    def _extr(self, state, n):
        Rc = np.broadcast_to(state.extrinsic.R, (n, 3, 3))
        tc = np.broadcast_to(state.extrinsic.t, (n, 3))
        return np.ascontiguousarray(Rc), np.ascontiguousarray(tc)

    def _eval_points(self, state, R, t):
        v = self.pts
        lam = np.array([state.points[f].inv_depth for f in self.point_ids])[v.feat_idx]
        Rc, tc = self._extr(state, len(v))
        i, j = v.anchor_frame, v.obs_frame
        return self.kernels.point_factors(R[i], t[i], R[j], t[j], Rc, tc, lam, v.anchor_a, v.obs_a)

    def _eval_lines(self, state, R, t):
        v = self.lns
        lam = np.array(
            [(state.lines[f].line.lambda_s, state.lines[f].line.lambda_e) for f in self.line_ids]
        ).reshape(-1, 2)[v.feat_idx]
        Rc, tc = self._extr(state, len(v))
        i, j = v.anchor_frame, v.obs_frame
        return self.kernels.line_factors(
            R[i], t[i], R[j], t[j], Rc, tc, lam, v.anchor_a, v.anchor_b, v.obs_a, v.obs_b, self.kl
        )

    def _eval_world_lines(self, state, R, t):
        v = self.wln
        L, dL = orthonormal_batch([state.ortho_lines[f] for f in self.ortho_ids])
        Rc, tc = self._extr(state, len(v))
        j = v.obs_frame
        return self.kernels.world_line_factors(
            R[j], t[j], Rc, tc, L[v.feat_idx], dL[v.feat_idx], v.obs_a, v.obs_b, self.kl
        )

    def _robust(self, v: _Visual, r: np.ndarray):
        rw = np.einsum("nij,nj->ni", v.sqrt_info, r)
        rho, drho = cauchy(np.einsum("ni,ni->n", rw, rw), self.cauchy_scale)
        return rw, rho, drho

    # --- public evaluation --------------------------------------------------

    def cost(self, state: SlidingWindowState) -> TotalCost:
        return self._run(state, None)[0]

    def linearize(self, state: SlidingWindowState, layout: Layout):
        """Return ``(TotalCost, H, b)`` with ``b = -J^T W r``."""
        return self._run(state, layout)

    def _run(self, state, layout):
        R, t = self._poses(state)
        dim = layout.dim if layout is not None else 0
        blocks: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        inactive = 0

        def add_visual(v, res, names):
            nonlocal inactive
            r, *Js, active = res
            rw, rho, drho = self._robust(v, r)
            inactive += int(np.count_nonzero(~active))
            if layout is not None and len(v):
                J = np.concatenate(Js, axis=2)
                Jw = np.einsum("nij,njk->nik", v.sqrt_info, J)
                cols = np.concatenate([self._cols(layout, v, name, len(v)) for name in names], axis=1)
                blocks.append((Jw, rw, drho, cols))
            return float(rho.sum())

        point_cost = line_cost = 0.0
        if len(self.pts):
            point_cost = add_visual(
                self.pts, self._eval_points(state, R, t), ("anchor", "obs", "extr", "point")
            )
        if len(self.lns):
            line_cost = add_visual(
                self.lns, self._eval_lines(state, R, t), ("anchor", "obs", "extr", "line")
            )
        if len(self.wln):
            line_cost += add_visual(
                self.wln, self._eval_world_lines(state, R, t), ("obs", "extr", "oline")
            )

        H = b = None
        if layout is not None:
            H = np.zeros((dim + 1) * (dim + 1))
            b = np.zeros(dim + 1)
            for Jw, rw, w, cols in blocks:
                Hf = np.einsum("n,nik,nil->nkl", w, Jw, Jw)
                bf = -np.einsum("n,nik,ni->nk", w, Jw, rw)
                idx = cols[:, :, None] * (dim + 1) + cols[:, None, :]
                H += np.bincount(idx.ravel(), weights=Hf.ravel(), minlength=(dim + 1) ** 2)
                b += np.bincount(cols.ravel(), weights=bf.ravel(), minlength=dim + 1)
            H = H.reshape(dim + 1, dim + 1)

        odo_cost = 0.0
        for f in self.graph.odometry:
            pi, pj = state.poses[f.frame_i], state.poses[f.frame_j]
            r = odometry_residual(f, pi, pj)
            odo_cost += float(r @ r)
            if layout is not None:
                Ji, Jj = odometry_jacobians(f, pi, pj)
                J = np.hstack([Ji, Jj])
                cols = np.concatenate(
                    [layout.cols(("pose", f.frame_i), 6), layout.cols(("pose", f.frame_j), 6)]
                )
                H[np.ix_(cols, cols)] += J.T @ J
                np.add.at(b, cols, -J.T @ r)

        prior_cost = 0.0
        if state.prior is not None and state.prior.J_p.size:
            p = state.prior
            r = prior_residual(p, state)
            prior_cost = float(r @ r) + p.cost_offset
            if layout is not None:
                cols = np.concatenate([layout.cols(k, var_dim(k, state)) for k in p.keys])
                H[np.ix_(cols, cols)] += p.J_p.T @ p.J_p
                np.add.at(b, cols, -p.J_p.T @ r)

        total = prior_cost + odo_cost + point_cost + line_cost
        cost = TotalCost(total, prior_cost, odo_cost, point_cost, line_cost, inactive)
        if layout is None:
            return cost, None, None
        return cost, H[:dim, :dim], b[:dim]

    def _cols(self, layout: Layout, v: _Visual, name: str, n: int) -> np.ndarray:
        if name in ("anchor", "obs"):
            slots = v.anchor_frame if name == "anchor" else v.obs_frame
            table = np.array([layout.cols(("pose", f), 6) for f in self.frame_ids]).reshape(-1, 6)
            return table[slots]
        if name == "extr":
            return np.broadcast_to(layout.cols(("extrinsic",), 6), (n, 6))
        if name == "point":
            table = np.array([layout.cols(("point", f), 1) for f in self.point_ids]).reshape(-1, 1)
            return table[v.feat_idx]
        if name == "line":
            table = np.array([layout.cols(("line", f), 2) for f in self.line_ids]).reshape(-1, 2)
            return table[v.feat_idx]
        table = np.array([layout.cols(("line", f), 4) for f in self.ortho_ids]).reshape(-1, 4)
        return table[v.feat_idx]

    # --- per-line blocks for the two-step refit -----------------------------

    def plane_seeds(self, state: SlidingWindowState, min_parallax: float) -> tuple[np.ndarray, np.ndarray]:
        """Plane-distance least-squares inverse depths of every anchored line at the current poses.

        Vectorized form of ``initialization.fit_inverse_depths`` over all
        observations: each non-anchor observation gives the plane through its
        camera center and observed segment, expressed in the anchor camera;
        planes with less than ``min_parallax`` offset from the anchor center
        are skipped.  Returns ``(params (n, 2), ok (n,))``.
        """
        n = len(self.line_ids)
        v = self.lns
        if n == 0 or len(v) == 0:
            return np.zeros((n, 2)), np.zeros(n, dtype=bool)
        R, t = self._poses(state)
        Rc, tc = state.extrinsic.R, state.extrinsic.t
        Rcam = R @ Rc  # camera-in-world rotations per frame
        tcam = t + R @ tc
        Ra, ta = Rcam[v.anchor_frame], tcam[v.anchor_frame]
        Rj, tj = Rcam[v.obs_frame], tcam[v.obs_frame]
        R_rel = np.swapaxes(Ra, 1, 2) @ Rj
        t_rel = np.einsum("nji,nj->ni", Ra, tj - ta)
        ones = np.ones((len(v), 1))
        s_obs = np.hstack([v.obs_a, ones])
        e_obs = np.hstack([v.obs_b, ones])
        normal = np.einsum("nij,nj->ni", R_rel, np.cross(s_obs, e_obs))
        D = -np.einsum("ni,ni->n", normal, t_rel)
        nn = np.linalg.norm(normal, axis=1)
        use = (nn > 0) & (np.abs(D) > min_parallax * nn)
        nn = np.where(nn > 0, nn, 1.0)
        normal, D = normal / nn[:, None], D / nn
        params = np.zeros((n, 2))
        ok = np.ones(n, dtype=bool)
        for col, anchor in enumerate((v.anchor_a, v.anchor_b)):
            a = np.einsum("ni,ni->n", normal, np.hstack([anchor, ones])) * use
            num = np.bincount(v.feat_idx, weights=-a * D * use, minlength=n)
            den = np.bincount(v.feat_idx, weights=a * a, minlength=n)
            good = den > 1e-300
            depth = num / np.where(good, den, 1.0)
            ok &= good & (depth > 0)
            params[:, col] = np.where(depth > 0, 1.0 / np.where(depth > 0, depth, 1.0), 0.0)
        return params, ok


    def line_blocks(self, state: SlidingWindowState):
        """Per-line cost, Gauss-Newton Hessian and ``-gradient`` at fixed poses.

        Returns ``(ids, cost (n,), H (n,k,k), b (n,k), inactive (n,))`` in
        sorted feature-id order, ``k`` being 2 or 4 by representation.
        """
        R, t = self._poses(state)
        if self.line_ids:
            v, ids, k = self.lns, self.line_ids, 2
            r, _, _, _, J, active = self._eval_lines(state, R, t)
        elif self.ortho_ids:
            v, ids, k = self.wln, self.ortho_ids, 4
            r, _, _, J, active = self._eval_world_lines(state, R, t)
        else:
            return [], np.zeros(0), np.zeros((0, 2, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
        n = len(ids)
        rw, rho, w = self._robust(v, r)
        Jw = np.einsum("nij,njk->nik", v.sqrt_info, J)
        cost = np.bincount(v.feat_idx, weights=rho, minlength=n)
        Hf = np.einsum("n,nik,nil->nkl", w, Jw, Jw).reshape(len(v), -1)
        bf = -np.einsum("n,nik,ni->nk", w, Jw, rw)
        H = np.stack([np.bincount(v.feat_idx, weights=Hf[:, c], minlength=n) for c in range(k * k)], 1)
        b = np.stack([np.bincount(v.feat_idx, weights=bf[:, c], minlength=n) for c in range(k)], 1)
        bad = np.bincount(v.feat_idx, weights=(~active).astype(float), minlength=n).astype(int)
        return ids, cost, H.reshape(n, k, k), b, bad

