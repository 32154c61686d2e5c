"""Vectorized numpy factor kernels (fallback backend).

Each kernel takes per-factor gathered pose arrays of shape ``(N, 3, 3)`` /
``(N, 3)`` and returns residuals plus Jacobian blocks with pose columns
ordered ``(dt, dphi)``.  Factors whose projection degenerates come back
inactive with zero residual and Jacobians.
"""

from __future__ import annotations

import numpy as np

DEGENERATE_PROJECTION = 1e-8
MIN_DEPTH = 1e-8


def _skew(v: np.ndarray) -> np.ndarray:
    S = np.zeros(v.shape[:-1] + (3, 3))
    S[..., 0, 1] = -v[..., 2]
    S[..., 0, 2] = v[..., 1]
    S[..., 1, 0] = v[..., 2]
    S[..., 1, 2] = -v[..., 0]
    S[..., 2, 0] = -v[..., 1]
    S[..., 2, 1] = v[..., 0]
    return S


def _mv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("nij,nj->ni", M, v)


def _mtv(M: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("nji,nj->ni", M, v)


def _homog(uv: np.ndarray) -> np.ndarray:
    return np.concatenate([uv, np.ones((uv.shape[0], 1))], axis=1)


def _kl(kl) -> np.ndarray:
    fx, fy, cx, cy = kl
    return np.array([[fy, 0.0, 0.0], [0.0, fx, 0.0], [-fy * cx, -fx * cy, fx * fy]])


def _project_and_chain(n2, d2, Rj, tj, Rc, tc, obs_s, obs_e, kl):
    """World line -> residual, plus the 2x3 sensitivities to (n2, d2) and pose j / extrinsic (obs side)."""
    d3 = _mtv(Rj, d2)
    n3 = _mtv(Rj, n2 - np.cross(tj, d2))
    d4 = _mtv(Rc, d3)
    n4 = _mtv(Rc, n3 - np.cross(tc, d3))
    KL = _kl(kl)
    l = n4 @ KL.T
    q = l[:, 0] ** 2 + l[:, 1] ** 2
    nrm = np.sqrt(q)
    active = nrm > DEGENERATE_PROJECTION * np.linalg.norm(l, axis=1)
    nrm_safe = np.where(active, nrm, 1.0)
    q_safe = nrm_safe**2

    s, e = _homog(obs_s), _homog(obs_e)
    sl = np.einsum("ni,ni->n", s, l)
    el = np.einsum("ni,ni->n", e, l)
    r = np.stack([sl, el], axis=1) / nrm_safe[:, None]

    dr_dl = np.zeros((len(l), 2, 3))
    for row, (p, pl) in enumerate(((s, sl), (e, el))):
        dr_dl[:, row, 0] = -l[:, 0] * pl / q_safe + p[:, 0]
        dr_dl[:, row, 1] = -l[:, 1] * pl / q_safe + p[:, 1]
        dr_dl[:, row, 2] = p[:, 2]
    dr_dl /= nrm_safe[:, None, None]

    A = dr_dl @ KL  # d r / d n4
    B3n = A @ np.swapaxes(Rc, 1, 2)
    B3d = -B3n @ _skew(tc)
    RjT = np.swapaxes(Rj, 1, 2)
    B2n = B3n @ RjT
    B2d = -B2n @ _skew(tj) + B3d @ RjT

    J_j = np.concatenate([B2n @ _skew(d2), B3n @ _skew(n3) + B3d @ _skew(d3)], axis=2)
    J_c_obs = np.concatenate([B3n @ _skew(d3), A @ _skew(n4)], axis=2)
    return r, active, B2n, B2d, J_j, J_c_obs


def line_factors(Ri, ti, Rj, tj, Rc, tc, lam, anchor_s, anchor_e, obs_s, obs_e, kl):
    """Inverse-depth line factors.

    Returns ``(r, J_anchor, J_obs, J_extrinsic, J_lambda, active)``.
    """
    s, e = _homog(anchor_s), _homog(anchor_e)
    zs, ze = 1.0 / lam[:, 0], 1.0 / lam[:, 1]
    S, E = s * zs[:, None], e * ze[:, None]
    n0 = np.cross(S, E)
    d0 = E - S
    d1 = _mv(Rc, d0)
    n1 = _mv(Rc, n0) + np.cross(tc, d1)
    d2 = _mv(Ri, d1)
    n2 = _mv(Ri, n1) + np.cross(ti, d2)

    r, active, B2n, B2d, J_j, J_c = _project_and_chain(n2, d2, Rj, tj, Rc, tc, obs_s, obs_e, kl)

    B1n = B2n @ Ri
    B1d = B2n @ _skew(ti) @ Ri + B2d @ Ri
    J_i = np.concatenate([-B2n @ _skew(d2), -B1n @ _skew(n1) - B1d @ _skew(d1)], axis=2)
    B0n = B1n @ Rc
    B0d = B1n @ _skew(tc) @ Rc + B1d @ Rc
    J_c = J_c + np.concatenate([-B1n @ _skew(d1), -B0n @ _skew(n0) - B0d @ _skew(d0)], axis=2)

    sxe = np.cross(s, e)
    dn_s = -sxe * (zs**2 * ze)[:, None]
    dn_e = -sxe * (zs * ze**2)[:, None]
    dd_s = s * (zs**2)[:, None]
    dd_e = -e * (ze**2)[:, None]
    J_l = np.stack(
        [
            np.einsum("nij,nj->ni", B0n, dn_s) + np.einsum("nij,nj->ni", B0d, dd_s),
            np.einsum("nij,nj->ni", B0n, dn_e) + np.einsum("nij,nj->ni", B0d, dd_e),
        ],
        axis=2,
    )
    return _mask(active, r, J_i, J_j, J_c, J_l)


def world_line_factors(Rj, tj, Rc, tc, Lw, dLw, obs_s, obs_e, kl):
    """World-frame line factors; ``dLw`` (N, 6, k) is the line's local parametrization Jacobian.

    Returns ``(r, J_obs, J_extrinsic, J_line, active)``.
    """
    n2, d2 = Lw[:, :3], Lw[:, 3:]
    r, active, B2n, B2d, J_j, J_c = _project_and_chain(n2, d2, Rj, tj, Rc, tc, obs_s, obs_e, kl)
    J_line = B2n @ dLw[:, :3, :] + B2d @ dLw[:, 3:, :]
    return _mask(active, r, J_j, J_c, J_line)


def point_factors(Ri, ti, Rj, tj, Rc, tc, lam, anchor_px, obs_px):
    """Inverse-depth point factors.

    Returns ``(r, J_anchor, J_obs, J_extrinsic, J_lambda, active)``.
    """
    p = _homog(anchor_px)
    z = 1.0 / lam
    P0 = p * z[:, None]
    P1 = _mv(Rc, P0) + tc
    P2 = _mv(Ri, P1) + ti
    P3 = _mtv(Rj, P2 - tj)
    P4 = _mtv(Rc, P3 - tc)
    depth = P4[:, 2]
    active = depth > MIN_DEPTH
    zz = np.where(active, depth, 1.0)
    r = P4[:, :2] / zz[:, None] - obs_px

    D = np.zeros((len(p), 2, 3))
    D[:, 0, 0] = 1.0 / zz
    D[:, 1, 1] = 1.0 / zz
    D[:, 0, 2] = -P4[:, 0] / zz**2
    D[:, 1, 2] = -P4[:, 1] / zz**2
    C3 = D @ np.swapaxes(Rc, 1, 2)
    C2 = C3 @ np.swapaxes(Rj, 1, 2)
    C1 = C2 @ Ri
    C0 = C1 @ Rc
    J_i = np.concatenate([C2, -C1 @ _skew(P1)], axis=2)
    J_j = np.concatenate([-C2, C3 @ _skew(P3)], axis=2)
    J_c = np.concatenate([C1 - C3, -C0 @ _skew(P0) + D @ _skew(P4)], axis=2)
    J_l = np.einsum("nij,nj->ni", C0, -p * (z**2)[:, None])[:, :, None]
    return _mask(active, r, J_i, J_j, J_c, J_l)


def _mask(active, *arrays):
    inactive = ~active
    out = []
    for a in arrays:
        a = np.array(a, copy=True)
        a[inactive] = 0.0
        out.append(a)
    return (*out, active)
