# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled factor kernels.

Same contract as ``idline._kernels_py``; one C loop per factor with all
intermediates on the stack.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef double DEGENERATE_PROJECTION = 1e-8
cdef double MIN_DEPTH = 1e-8


cdef inline void mv(const double* M, const double* v, double* out) noexcept nogil:
    out[0] = M[0] * v[0] + M[1] * v[1] + M[2] * v[2]
    out[1] = M[3] * v[0] + M[4] * v[1] + M[5] * v[2]
    out[2] = M[6] * v[0] + M[7] * v[1] + M[8] * v[2]


cdef inline void mtv(const double* M, const double* v, double* out) noexcept nogil:
    out[0] = M[0] * v[0] + M[3] * v[1] + M[6] * v[2]
    out[1] = M[1] * v[0] + M[4] * v[1] + M[7] * v[2]
    out[2] = M[2] * v[0] + M[5] * v[1] + M[8] * v[2]


cdef inline void cross(const double* a, const double* b, double* out) noexcept nogil:
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


cdef inline double dot(const double* a, const double* b) noexcept nogil:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


cdef inline void bm(const double* B, const double* M, double* out) noexcept nogil:
    # out(2x3) = B(2x3) @ M(3x3)
    cdef int r, c
    for r in range(2):
        for c in range(3):
            out[3 * r + c] = B[3 * r] * M[c] + B[3 * r + 1] * M[3 + c] + B[3 * r + 2] * M[6 + c]


cdef inline void bmt(const double* B, const double* M, double* out) noexcept nogil:
    # out(2x3) = B(2x3) @ M^T
    cdef int r, c
    for r in range(2):
        for c in range(3):
            out[3 * r + c] = B[3 * r] * M[3 * c] + B[3 * r + 1] * M[3 * c + 1] + B[3 * r + 2] * M[3 * c + 2]


cdef inline void bskew(const double* B, const double* v, double* out) noexcept nogil:
    # out(2x3) = B @ [v]x, i.e. each row b -> b x v
    cdef int r
    for r in range(2):
        cross(&B[3 * r], v, &out[3 * r])


cdef inline void badd(double* a, const double* b, double s) noexcept nogil:
    cdef int k
    for k in range(6):
        a[k] += s * b[k]


cdef inline void store(double[:, :, ::1] J, Py_ssize_t n, int col0, const double* B) noexcept nogil:
    cdef int r, c
    for r in range(2):
        for c in range(3):
            J[n, r, col0 + c] = B[3 * r + c]


cdef inline bint project_chain(
    const double* n2, const double* d2, const double* Rj, const double* tj,
    const double* Rc, const double* tc, const double* so, const double* eo, const double* KL,
    double* r, double* B2n, double* B2d, double* Jj_t, double* Jj_r, double* Jc_t, double* Jc_r,
) noexcept nogil:
    cdef double tmp[3]
    cdef double tmp2[3]
    cdef double n3[3]
    cdef double d3[3]
    cdef double n4[3]
    cdef double d4[3]
    cdef double l[3]
    cdef double A[6]
    cdef double B3n[6]
    cdef double B3d[6]
    cdef double X[6]
    cdef double s[3]
    cdef double e[3]
    cdef double q, nrm, sl, el, ln
    cdef int row

    mtv(Rj, d2, d3)
    cross(tj, d2, tmp)
    tmp[0] = n2[0] - tmp[0]
    tmp[1] = n2[1] - tmp[1]
    tmp[2] = n2[2] - tmp[2]
    mtv(Rj, tmp, n3)
    mtv(Rc, d3, d4)
    cross(tc, d3, tmp)
    tmp[0] = n3[0] - tmp[0]
    tmp[1] = n3[1] - tmp[1]
    tmp[2] = n3[2] - tmp[2]
    mtv(Rc, tmp, n4)
    mv(KL, n4, l)

    q = l[0] * l[0] + l[1] * l[1]
    nrm = sqrt(q)
    ln = sqrt(q + l[2] * l[2])
    if not nrm > DEGENERATE_PROJECTION * ln:
        return 0

    s[0] = so[0]; s[1] = so[1]; s[2] = 1.0
    e[0] = eo[0]; e[1] = eo[1]; e[2] = 1.0
    sl = dot(s, l)
    el = dot(e, l)
    r[0] = sl / nrm
    r[1] = el / nrm
    # dr/dl
    X[0] = (-l[0] * sl / q + s[0]) / nrm
    X[1] = (-l[1] * sl / q + s[1]) / nrm
    X[2] = 1.0 / nrm
    X[3] = (-l[0] * el / q + e[0]) / nrm
    X[4] = (-l[1] * el / q + e[1]) / nrm
    X[5] = 1.0 / nrm
    bm(X, KL, A)

    bmt(A, Rc, B3n)
    bskew(B3n, tc, B3d)
    for row in range(6):
        B3d[row] = -B3d[row]
    bmt(B3n, Rj, B2n)
    bskew(B2n, tj, B2d)
    bmt(B3d, Rj, X)
    for row in range(6):
        B2d[row] = X[row] - B2d[row]

    bskew(B2n, d2, Jj_t)
    bskew(B3n, n3, Jj_r)
    bskew(B3d, d3, X)
    badd(Jj_r, X, 1.0)
    bskew(B3n, d3, Jc_t)
    bskew(A, n4, Jc_r)
    return 1


cdef inline void fill_kl(object kl, double* KL):
    fx, fy, cx, cy = kl
    KL[0] = fy; KL[1] = 0.0; KL[2] = 0.0
    KL[3] = 0.0; KL[4] = fx; KL[5] = 0.0
    KL[6] = -fy * cx; KL[7] = -fx * cy; KL[8] = fx * fy


def line_factors(
    const double[:, :, ::1] Ri, const double[:, ::1] ti,
    const double[:, :, ::1] Rj, const double[:, ::1] tj,
    const double[:, :, ::1] Rc, const double[:, ::1] tc,
    const double[:, ::1] lam, const double[:, ::1] anchor_s, const double[:, ::1] anchor_e,
    const double[:, ::1] obs_s, const double[:, ::1] obs_e, kl,
):
    cdef Py_ssize_t N = lam.shape[0]
    r_arr = np.zeros((N, 2))
    Ji_arr = np.zeros((N, 2, 6))
    Jj_arr = np.zeros((N, 2, 6))
    Jc_arr = np.zeros((N, 2, 6))
    Jl_arr = np.zeros((N, 2, 2))
    act_arr = np.zeros(N, dtype=np.uint8)
    cdef double[:, ::1] r = r_arr
    cdef double[:, :, ::1] Ji = Ji_arr
    cdef double[:, :, ::1] Jj = Jj_arr
    cdef double[:, :, ::1] Jc = Jc_arr
    cdef double[:, :, ::1] Jl = Jl_arr
    cdef unsigned char[::1] act = act_arr
    cdef double KL[9]
    fill_kl(kl, KL)

    cdef double s[3]
    cdef double e[3]
    cdef double S[3]
    cdef double E[3]
    cdef double n0[3]
    cdef double d0[3]
    cdef double n1[3]
    cdef double d1[3]
    cdef double n2[3]
    cdef double d2[3]
    cdef double tmp[3]
    cdef double sxe[3]
    cdef double rr[2]
    cdef double B2n[6]
    cdef double B2d[6]
    cdef double B1n[6]
    cdef double B1d[6]
    cdef double B0n[6]
    cdef double B0d[6]
    cdef double X[6]
    cdef double Y[6]
    cdef double Jj_t[6]
    cdef double Jj_r[6]
    cdef double Jc_t[6]
    cdef double Jc_r[6]
    cdef double zs, ze, g
    cdef Py_ssize_t n
    cdef int k, row

    with nogil:
        for n in range(N):
            s[0] = anchor_s[n, 0]; s[1] = anchor_s[n, 1]; s[2] = 1.0
            e[0] = anchor_e[n, 0]; e[1] = anchor_e[n, 1]; e[2] = 1.0
            zs = 1.0 / lam[n, 0]
            ze = 1.0 / lam[n, 1]
            for k in range(3):
                S[k] = s[k] * zs
                E[k] = e[k] * ze
                d0[k] = E[k] - S[k]
            cross(S, E, n0)
            mv(&Rc[n, 0, 0], d0, d1)
            mv(&Rc[n, 0, 0], n0, n1)
            cross(&tc[n, 0], d1, tmp)
            for k in range(3):
                n1[k] += tmp[k]
            mv(&Ri[n, 0, 0], d1, d2)
            mv(&Ri[n, 0, 0], n1, n2)
            cross(&ti[n, 0], d2, tmp)
            for k in range(3):
                n2[k] += tmp[k]

            if not project_chain(n2, d2, &Rj[n, 0, 0], &tj[n, 0], &Rc[n, 0, 0], &tc[n, 0],
                                 &obs_s[n, 0], &obs_e[n, 0], KL,
                                 rr, B2n, B2d, Jj_t, Jj_r, Jc_t, Jc_r):
                continue
            act[n] = 1
            r[n, 0] = rr[0]
            r[n, 1] = rr[1]
            store(Jj, n, 0, Jj_t)
            store(Jj, n, 3, Jj_r)

            # anchor pose
            bm(B2n, &Ri[n, 0, 0], B1n)
            bskew(B2n, &ti[n, 0], X)
            bm(X, &Ri[n, 0, 0], B1d)
            bm(B2d, &Ri[n, 0, 0], X)
            badd(B1d, X, 1.0)
            bskew(B2n, d2, X)
            for row in range(6):
                X[row] = -X[row]
            store(Ji, n, 0, X)
            bskew(B1n, n1, X)
            bskew(B1d, d1, Y)
            for row in range(6):
                X[row] = -X[row] - Y[row]
            store(Ji, n, 3, X)

            # extrinsic, anchor side
            bm(B1n, &Rc[n, 0, 0], B0n)
            bskew(B1n, &tc[n, 0], X)
            bm(X, &Rc[n, 0, 0], B0d)
            bm(B1d, &Rc[n, 0, 0], X)
            badd(B0d, X, 1.0)
            bskew(B1n, d1, X)
            badd(Jc_t, X, -1.0)
            bskew(B0n, n0, X)
            badd(Jc_r, X, -1.0)
            bskew(B0d, d0, X)
            badd(Jc_r, X, -1.0)
            store(Jc, n, 0, Jc_t)
            store(Jc, n, 3, Jc_r)

            # inverse depths
            cross(s, e, sxe)
            for row in range(2):
                g = 0.0
                for k in range(3):
                    g += -B0n[3 * row + k] * sxe[k] * zs * zs * ze + B0d[3 * row + k] * s[k] * zs * zs
                Jl[n, row, 0] = g
                g = 0.0
                for k in range(3):
                    g += -B0n[3 * row + k] * sxe[k] * zs * ze * ze - B0d[3 * row + k] * e[k] * ze * ze
                Jl[n, row, 1] = g
    return r_arr, Ji_arr, Jj_arr, Jc_arr, Jl_arr, act_arr.view(bool)


def world_line_factors(
    const double[:, :, ::1] Rj, const double[:, ::1] tj,
    const double[:, :, ::1] Rc, const double[:, ::1] tc,
    const double[:, ::1] Lw, const double[:, :, ::1] dLw,
    const double[:, ::1] obs_s, const double[:, ::1] obs_e, kl,
):
    cdef Py_ssize_t N = Lw.shape[0]
    cdef Py_ssize_t m = dLw.shape[2]
    r_arr = np.zeros((N, 2))
    Jj_arr = np.zeros((N, 2, 6))
    Jc_arr = np.zeros((N, 2, 6))
    JL_arr = np.zeros((N, 2, m))
    act_arr = np.zeros(N, dtype=np.uint8)
    cdef double[:, ::1] r = r_arr
    cdef double[:, :, ::1] Jj = Jj_arr
    cdef double[:, :, ::1] Jc = Jc_arr
    cdef double[:, :, ::1] JL = JL_arr
    cdef unsigned char[::1] act = act_arr
    cdef double KL[9]
    fill_kl(kl, KL)
    cdef double rr[2]
    cdef double B2n[6]
    cdef double B2d[6]
    cdef double Jj_t[6]
    cdef double Jj_r[6]
    cdef double Jc_t[6]
    cdef double Jc_r[6]
    cdef double g
    cdef Py_ssize_t n, c
    cdef int row, k

    with nogil:
        for n in range(N):
            if not project_chain(&Lw[n, 0], &Lw[n, 3], &Rj[n, 0, 0], &tj[n, 0], &Rc[n, 0, 0], &tc[n, 0],
                                 &obs_s[n, 0], &obs_e[n, 0], KL,
                                 rr, B2n, B2d, Jj_t, Jj_r, Jc_t, Jc_r):
                continue
            act[n] = 1
            r[n, 0] = rr[0]
            r[n, 1] = rr[1]
            store(Jj, n, 0, Jj_t)
            store(Jj, n, 3, Jj_r)
            store(Jc, n, 0, Jc_t)
            store(Jc, n, 3, Jc_r)
            for row in range(2):
                for c in range(m):
                    g = 0.0
                    for k in range(3):
                        g += B2n[3 * row + k] * dLw[n, k, c] + B2d[3 * row + k] * dLw[n, 3 + k, c]
                    JL[n, row, c] = g
    return r_arr, Jj_arr, Jc_arr, JL_arr, act_arr.view(bool)


def point_factors(
    const double[:, :, ::1] Ri, const double[:, ::1] ti,
    const double[:, :, ::1] Rj, const double[:, ::1] tj,
    const double[:, :, ::1] Rc, const double[:, ::1] tc,
    const double[::1] lam, const double[:, ::1] anchor_px, const double[:, ::1] obs_px,
):
    cdef Py_ssize_t N = lam.shape[0]
    r_arr = np.zeros((N, 2))
    Ji_arr = np.zeros((N, 2, 6))
    Jj_arr = np.zeros((N, 2, 6))
    Jc_arr = np.zeros((N, 2, 6))
    Jl_arr = np.zeros((N, 2, 1))
    act_arr = np.zeros(N, dtype=np.uint8)
    cdef double[:, ::1] r = r_arr
    cdef double[:, :, ::1] Ji = Ji_arr
    cdef double[:, :, ::1] Jj = Jj_arr
    cdef double[:, :, ::1] Jc = Jc_arr
    cdef double[:, :, ::1] Jl = Jl_arr
    cdef unsigned char[::1] act = act_arr
    cdef double p[3]
    cdef double P0[3]
    cdef double P1[3]
    cdef double P2[3]
    cdef double P3[3]
    cdef double P4[3]
    cdef double tmp[3]
    cdef double D[6]
    cdef double C0[6]
    cdef double C1[6]
    cdef double C2[6]
    cdef double C3[6]
    cdef double X[6]
    cdef double Y[6]
    cdef double z, zz
    cdef Py_ssize_t n
    cdef int k, row

    with nogil:
        for n in range(N):
            p[0] = anchor_px[n, 0]; p[1] = anchor_px[n, 1]; p[2] = 1.0
            z = 1.0 / lam[n]
            for k in range(3):
                P0[k] = p[k] * z
            mv(&Rc[n, 0, 0], P0, P1)
            for k in range(3):
                P1[k] += tc[n, k]
            mv(&Ri[n, 0, 0], P1, P2)
            for k in range(3):
                P2[k] += ti[n, k]
                tmp[k] = P2[k] - tj[n, k]
            mtv(&Rj[n, 0, 0], tmp, P3)
            for k in range(3):
                tmp[k] = P3[k] - tc[n, k]
            mtv(&Rc[n, 0, 0], tmp, P4)
            zz = P4[2]
            if not zz > MIN_DEPTH:
                continue
            act[n] = 1
            r[n, 0] = P4[0] / zz - obs_px[n, 0]
            r[n, 1] = P4[1] / zz - obs_px[n, 1]
            D[0] = 1.0 / zz; D[1] = 0.0; D[2] = -P4[0] / (zz * zz)
            D[3] = 0.0; D[4] = 1.0 / zz; D[5] = -P4[1] / (zz * zz)
            bmt(D, &Rc[n, 0, 0], C3)
            bmt(C3, &Rj[n, 0, 0], C2)
            bm(C2, &Ri[n, 0, 0], C1)
            bm(C1, &Rc[n, 0, 0], C0)

            store(Ji, n, 0, C2)
            bskew(C1, P1, X)
            for row in range(6):
                X[row] = -X[row]
            store(Ji, n, 3, X)

            for row in range(6):
                X[row] = -C2[row]
            store(Jj, n, 0, X)
            bskew(C3, P3, X)
            store(Jj, n, 3, X)

            for row in range(6):
                X[row] = C1[row] - C3[row]
            store(Jc, n, 0, X)
            bskew(C0, P0, X)
            bskew(D, P4, Y)
            for row in range(6):
                X[row] = Y[row] - X[row]
            store(Jc, n, 3, X)

            for row in range(2):
                Jl[n, row, 0] = -(C0[3 * row] * p[0] + C0[3 * row + 1] * p[1] + C0[3 * row + 2] * p[2]) * z * z
    return r_arr, Ji_arr, Jj_arr, Jc_arr, Jl_arr, act_arr.view(bool)
