import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from helpers import plucker_oracle, random_pose, random_segment, rng_from, same_line, seeds
from idline.errors import BehindCameraError, DegenerateLineError, GeometryError, NoIntersectionError
from idline.geometry import (
    CameraPose,
    InverseDepthLine,
    OrthonormalLine,
    PluckerLine,
    inverse_depth_from_plucker,
    invert_transform_line,
    line_error,
    orthonormal_from_plucker,
    plucker_from_inverse_depth,
    plucker_from_orthonormal,
    transform_line,
)
from idline.lie import so3_exp, so3_log


def anchored(rng):
    """Random inverse-depth line with endpoints in front of the anchor camera."""
    S = np.array([*rng.uniform(-1, 1, 2), rng.uniform(1, 8)])
    E = np.array([*rng.uniform(-1, 1, 2), rng.uniform(1, 8)])
    return InverseDepthLine(1 / S[2], 1 / E[2], S[:2] / S[2], E[:2] / E[2]), S, E


# --- plucker_from_inverse_depth -------------------------------------------------


def test_inverse_depth_unit_example():
    L = plucker_from_inverse_depth(InverseDepthLine(1, 1, [0, 0], [1, 0]))
    np.testing.assert_allclose(L.n, [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(L.d, [1, 0, 0], atol=1e-15)


def test_inverse_depth_doubling_example():
    L = plucker_from_inverse_depth(InverseDepthLine(2, 2, [0, 0], [1, 0]))
    np.testing.assert_allclose(L.n, [0, 0.25, 0], atol=1e-15)
    np.testing.assert_allclose(L.d, [0.5, 0, 0], atol=1e-15)


def test_inverse_depth_generic_example_against_oracle():
    L = plucker_from_inverse_depth(InverseDepthLine(0.5, 0.25, [0.1, -0.2], [0.3, 0.4]))
    S = np.array([0.1, -0.2, 1.0]) / 0.5
    E = np.array([0.3, 0.4, 1.0]) / 0.25
    np.testing.assert_allclose(L.vector(), plucker_oracle(S, E), rtol=1e-14)
    # hand values: S = (0.2, -0.4, 2), E = (1.2, 1.6, 4)
    np.testing.assert_allclose(L.d, [1.0, 2.0, 2.0], rtol=1e-14)
    np.testing.assert_allclose(L.n, [-4.8, 1.6, 0.8], rtol=1e-14)


def test_inverse_depth_line_rejects_bad_state():
    with pytest.raises(BehindCameraError):
        InverseDepthLine(0.0, 1.0, [0, 0], [1, 0])
    with pytest.raises(BehindCameraError):
        InverseDepthLine(1.0, -1.0, [0, 0], [1, 0])
    with pytest.raises(DegenerateLineError):
        InverseDepthLine(1.0, 1.0, [0.3, 0.3], [0.3, 0.3 + 1e-9])


def test_inverse_depth_anchors_are_immutable():
    ln = InverseDepthLine(1, 1, [0, 0], [1, 0])
    with pytest.raises(ValueError):
        ln.anchor_s[0] = 5.0


@given(seeds)
def test_inverse_depth_klein_constraint(seed):
    ln, _, _ = anchored(rng_from(seed))
    L = plucker_from_inverse_depth(ln)
    assert abs(L.n @ L.d) <= 1e-10 * np.linalg.norm(L.n) * np.linalg.norm(L.d)


@given(seeds, st.floats(0.1, 10.0))
def test_uniform_inverse_depth_scaling(seed, k):
    ln, _, _ = anchored(rng_from(seed))
    a = plucker_from_inverse_depth(ln)
    b = plucker_from_inverse_depth(ln.with_depths(k * ln.lambda_s, k * ln.lambda_e))
    np.testing.assert_allclose(b.d, a.d / k, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(b.n, a.n / k**2, rtol=1e-12, atol=1e-14)


# --- inverse_depth_from_plucker ----------------------------------------------------


def test_inverse_depth_from_plucker_unit_round_trip():
    ln = inverse_depth_from_plucker(PluckerLine([0, 1, 0], [1, 0, 0]), [0, 0], [1, 0])
    assert ln.lambda_s == pytest.approx(1.0, abs=1e-15)
    assert ln.lambda_e == pytest.approx(1.0, abs=1e-15)


@given(seeds)
def test_inverse_depth_from_plucker_recovers_generating_depths(seed):
    rng = rng_from(seed)
    ln, S, E = anchored(rng)
    # hand the inverse a differently scaled Plücker vector of the same line
    L = PluckerLine(*np.split(3.7 * plucker_oracle(S, E), 2))
    got = inverse_depth_from_plucker(L, ln.anchor_s, ln.anchor_e)
    assert got.lambda_s == pytest.approx(1 / S[2], rel=1e-10)
    assert got.lambda_e == pytest.approx(1 / E[2], rel=1e-10)


def test_inverse_depth_from_plucker_parallel_ray():
    # line x = 1, z = 0 direction (0, 0, 1): parallel to the optical axis ray through (0, 0)
    L = PluckerLine.from_points([1, 0, 1], [1, 0, 2])
    with pytest.raises(NoIntersectionError):
        inverse_depth_from_plucker(L, [0, 0], [1, 0])


def test_inverse_depth_from_plucker_skew_ray():
    # the line y = 1, z = 2 never meets the ray through pixel (0, 0)
    L = PluckerLine.from_points([0, 1, 2], [1, 1, 2])
    with pytest.raises(NoIntersectionError):
        inverse_depth_from_plucker(L, [0, 0], [0.5, 0.5])


def test_inverse_depth_from_plucker_behind_camera():
    L = PluckerLine.from_points([0, 0, -2], [1, 0, -2])
    with pytest.raises(BehindCameraError):
        inverse_depth_from_plucker(L, [0, 0], [-0.5, 0])


# --- orthonormal -------------------------------------------------------------------


def test_orthonormal_symmetric_example():
    o = orthonormal_from_plucker(PluckerLine([0, 1, 0], [1, 0, 0]))
    assert o.theta1 == pytest.approx(np.pi / 4, abs=1e-15)
    w1, w2 = o.omega
    assert w1 == pytest.approx(1 / np.sqrt(2)) and w2 == pytest.approx(1 / np.sqrt(2))
    U = o.U
    # signed permutation: every row and column holds one +-1
    np.testing.assert_allclose(np.abs(U).sum(axis=0), 1, atol=1e-12)
    np.testing.assert_allclose(np.abs(U).sum(axis=1), 1, atol=1e-12)
    np.testing.assert_allclose(U[:, 0], [0, 1, 0], atol=1e-12)
    np.testing.assert_allclose(U[:, 1], [1, 0, 0], atol=1e-12)


def test_orthonormal_ratio_example():
    o = orthonormal_from_plucker(PluckerLine([0, 2, 0], [1, 0, 0]))
    assert o.theta1 == pytest.approx(np.arctan2(1, 2), abs=1e-15)


def test_orthonormal_rejects_line_through_origin():
    with pytest.raises(DegenerateLineError):
        orthonormal_from_plucker(PluckerLine([0, 0, 0], [1, 0, 0]))


def test_orthonormal_theta1_range():
    with pytest.raises(GeometryError):
        OrthonormalLine(np.zeros(3), 0.0)
    with pytest.raises(GeometryError):
        OrthonormalLine(np.zeros(3), np.pi / 2)


def test_plucker_from_orthonormal_identity_example():
    L = plucker_from_orthonormal(OrthonormalLine(np.zeros(3), np.pi / 4))
    np.testing.assert_allclose(L.n, [1 / np.sqrt(2), 0, 0], atol=1e-15)
    np.testing.assert_allclose(L.d, [0, 1 / np.sqrt(2), 0], atol=1e-15)


def test_orthonormal_example_round_trip():
    L = PluckerLine([0, 1, 0], [1, 0, 0])
    assert line_error(plucker_from_orthonormal(orthonormal_from_plucker(L)), L) < 1e-12


@given(seeds)
def test_plucker_from_orthonormal_against_direct_formula(seed):
    rng = rng_from(seed)
    theta3 = rng.normal(size=3)
    theta1 = rng.uniform(0.05, np.pi / 2 - 0.05)
    U = Rotation.from_rotvec(theta3).as_matrix()
    L = plucker_from_orthonormal(OrthonormalLine(theta3, theta1))
    np.testing.assert_allclose(L.n, np.cos(theta1) * U[:, 0], atol=1e-12)
    np.testing.assert_allclose(L.d, np.sin(theta1) * U[:, 1], atol=1e-12)


@given(seeds)
def test_orthonormal_invariants(seed):
    rng = rng_from(seed)
    p, q = random_segment(rng)
    o = orthonormal_from_plucker(PluckerLine.from_points(p, q))
    U, W = o.U, o.W
    np.testing.assert_allclose(U.T @ U, np.eye(3), atol=1e-10)
    assert np.linalg.det(U) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(W.T @ W, np.eye(2), atol=1e-12)
    assert np.linalg.det(W) == pytest.approx(1.0, abs=1e-12)
    assert 0 < o.theta1 < np.pi / 2
    w1, w2 = o.omega
    assert w1 > 0 and w2 > 0


@given(seeds, st.floats(0.01, 100.0))
def test_orthonormal_round_trip(seed, scale):
    p, q = random_segment(rng_from(seed))
    L = PluckerLine(*np.split(scale * plucker_oracle(p, q), 2))
    back = plucker_from_orthonormal(orthonormal_from_plucker(L))
    assert same_line(back, L) < 1e-10


@given(seeds)
def test_inverse_depth_round_trip(seed):
    rng = rng_from(seed)
    ln, S, E = anchored(rng)
    L = PluckerLine.from_points(S, E)
    # anchors from two other points of the same line
    a, b = S + 0.2 * (E - S), S + 0.9 * (E - S)
    back = plucker_from_inverse_depth(inverse_depth_from_plucker(L, a[:2] / a[2], b[:2] / b[2]))
    assert same_line(back, L) < 1e-9


# --- transforms ---------------------------------------------------------------------


def test_transform_identity():
    L = PluckerLine([0, 1, 0], [1, 0, 0])
    out = transform_line(L, CameraPose.identity())
    np.testing.assert_array_equal(out.vector(), L.vector())
    out = invert_transform_line(L, CameraPose.identity())
    np.testing.assert_array_equal(out.vector(), L.vector())


def test_transform_translation_example():
    out = transform_line(PluckerLine([0, 1, 0], [1, 0, 0]), CameraPose(np.eye(3), [0, 0, 1]))
    np.testing.assert_allclose(out.n, [0, 2, 0], atol=1e-15)
    np.testing.assert_allclose(out.d, [1, 0, 0], atol=1e-15)


@given(seeds)
def test_transform_matches_point_oracle(seed):
    rng = rng_from(seed)
    p, q = random_segment(rng)
    T = random_pose(rng)
    out = transform_line(PluckerLine.from_points(p, q), T)
    assert same_line(out, plucker_oracle(T.R @ p + T.t, T.R @ q + T.t)) < 1e-9
    assert abs(out.n @ out.d) <= 1e-9 * np.linalg.norm(out.n) * np.linalg.norm(out.d)


@given(seeds)
def test_invert_transform_matches_point_oracle(seed):
    rng = rng_from(seed)
    p, q = random_segment(rng)
    T = random_pose(rng)
    out = invert_transform_line(PluckerLine.from_points(p, q), T)
    Ti = np.linalg.inv(T.matrix())
    pp, qq = Ti[:3, :3] @ p + Ti[:3, 3], Ti[:3, :3] @ q + Ti[:3, 3]
    assert same_line(out, plucker_oracle(pp, qq)) < 1e-9


@given(seeds)
def test_transform_round_trip(seed):
    rng = rng_from(seed)
    L = PluckerLine.from_points(*random_segment(rng))
    T = random_pose(rng)
    back = invert_transform_line(transform_line(L, T), T)
    np.testing.assert_allclose(back.vector(), L.vector(), atol=1e-12 * max(1.0, np.abs(L.vector()).max()))


@given(seeds)
def test_transform_group_action(seed):
    rng = rng_from(seed)
    L = PluckerLine.from_points(*random_segment(rng))
    A, B = random_pose(rng), random_pose(rng)
    both = transform_line(L, A @ B)
    seq = transform_line(transform_line(L, B), A)
    np.testing.assert_allclose(both.vector(), seq.vector(), atol=1e-11 * max(1.0, np.abs(both.vector()).max()))


def test_camera_pose_rejects_non_rotation():
    with pytest.raises(GeometryError):
        CameraPose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(GeometryError):
        CameraPose(1.01 * np.eye(3), np.zeros(3))


@given(seeds)
def test_pose_plus_minus_round_trip(seed):
    rng = rng_from(seed)
    T = random_pose(rng)
    xi = rng.normal(scale=0.3, size=6)
    np.testing.assert_allclose(T.plus(xi).minus(T), xi, atol=1e-10)


@given(seeds, st.floats(-9.0, 0.0))
def test_so3_log_near_pi_against_scipy(seed, log_gap):
    # the axis is weakly observed from the skew part near pi
    rng = rng_from(seed)
    axis = rng.normal(size=3)
    phi = axis / np.linalg.norm(axis) * (np.pi - 10.0**log_gap)
    R = so3_exp(phi)
    want = Rotation.from_matrix(R).as_rotvec()
    got = so3_log(R)
    # at exactly pi both signs are the same rotation
    np.testing.assert_allclose(so3_exp(got), R, atol=1e-12)
    assert min(np.linalg.norm(got - want), np.linalg.norm(got + want)) < 1e-9
