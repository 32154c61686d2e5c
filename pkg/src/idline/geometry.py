"""Line representations and the conversions between them.

Three encodings of a 3D line are supported:

* :class:`PluckerLine` -- the 6-vector ``(n, d)`` with ``n . d = 0``.  Stored
  unnormalized; scale equivalence is handled by :func:`line_error`.
* :class:`OrthonormalLine` -- the minimal ``SO(3) x SO(2)`` encoding, stored
  as an axis-angle vector for ``U`` and an angle for ``W``.
* :class:`InverseDepthLine` -- two inverse depths along the rays through
  fixed anchor-frame endpoint pixels.  Only the two depths are free.

Poses are world-from-frame: a point ``x`` in the frame maps to
``R @ x + t`` in the parent frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, DegenerateLineError, GeometryError, NoIntersectionError
from .lie import project_to_so3, skew, so3_exp, so3_log

EPS_ORTH = 1e-9
EPS_DEG = 1e-12
EPS_PX = 1e-8
EPS_RAY = 1e-9

_I3 = np.eye(3)


def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CameraPose:
    """Rigid transform; ``R`` is parent-from-frame, ``t`` the frame origin in the parent."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = _frozen(self.R, (3, 3))
        t = _frozen(self.t, (3,))
        if np.abs(R.T @ R - _I3).max() > 1e-10 or abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise GeometryError("pose rotation is not in SO(3)")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> CameraPose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> CameraPose:
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def inverse(self) -> CameraPose:
        return CameraPose(self.R.T, -self.R.T @ self.t)

    def __matmul__(self, other: CameraPose) -> CameraPose:
        return CameraPose(self.R @ other.R, self.R @ other.t + self.t)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return self.R @ x + self.t

    def apply_inverse(self, x: np.ndarray) -> np.ndarray:
        return self.R.T @ (x - self.t)

    def plus(self, xi: np.ndarray) -> CameraPose:
        """Right-perturb the rotation and add to the translation; ``xi = (dt, dphi)``."""
        xi = np.asarray(xi, dtype=float)
        R = project_to_so3(self.R @ so3_exp(xi[3:]))
        return CameraPose(R, self.t + xi[:3])

    def minus(self, ref: CameraPose) -> np.ndarray:
        """Tangent ``xi`` such that ``ref.plus(xi) == self``."""
        return np.concatenate([self.t - ref.t, so3_log(ref.R.T @ self.R)])


@dataclass(frozen=True)
class PluckerLine:
    """Plücker coordinates: ``n`` normal of the plane through the origin, ``d`` direction."""

    n: np.ndarray
    d: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        n = _frozen(self.n, (3,))
        d = _frozen(self.d, (3,))
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "d", d)
        if not self.check:
            return
        nd, nn = np.linalg.norm(d), np.linalg.norm(n)
        if nd <= EPS_DEG:
            raise DegenerateLineError("line direction vanishes")
        if abs(n @ d) > EPS_ORTH * max(nn * nd, EPS_DEG):
            raise GeometryError(f"Klein constraint violated: n.d = {n @ d:.3e}")

    @classmethod
    def from_points(cls, p: np.ndarray, q: np.ndarray) -> PluckerLine:
        """Line through ``p`` then ``q``; ``d = q - p``, ``n = p x q``."""
        p = np.asarray(p, dtype=float)
        q = np.asarray(q, dtype=float)
        return cls(np.cross(p, q), q - p)

    @classmethod
    def raw(cls, n, d) -> PluckerLine:
        """Construct without invariant checks (used to expose degenerate baseline output)."""
        return cls(n, d, check=False)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.n, self.d])

    def normalized(self) -> np.ndarray:
        v = self.vector()
        return v / np.linalg.norm(v)

    def closest_point(self) -> np.ndarray:
        """Point of the line nearest the origin."""
        return np.cross(self.d, self.n) / (self.d @ self.d)


def line_error(a: PluckerLine, b: PluckerLine, *, oriented: bool = True) -> float:
    """Distance between two lines after joint normalization of ``(n, d)``.

    With ``oriented=True`` only positive rescaling counts as equivalent.
    """
    va, vb = a.normalized(), b.normalized()
    err = np.linalg.norm(va - vb)
    if not oriented:
        err = min(err, np.linalg.norm(va + vb))
    return float(err)


@dataclass(frozen=True)
class OrthonormalLine:
    theta3: np.ndarray
    theta1: float

    def __post_init__(self):
        object.__setattr__(self, "theta3", _frozen(self.theta3, (3,)))
        object.__setattr__(self, "theta1", float(self.theta1))
        if not 0.0 < self.theta1 < np.pi / 2:
            raise GeometryError(f"theta1 must lie in (0, pi/2), got {self.theta1}")

    @property
    def U(self) -> np.ndarray:
        return so3_exp(self.theta3)

    @property
    def W(self) -> np.ndarray:
        c, s = np.cos(self.theta1), np.sin(self.theta1)
        return np.array([[c, -s], [s, c]])

    @property
    def omega(self) -> tuple[float, float]:
        return float(np.cos(self.theta1)), float(np.sin(self.theta1))

    def plus(self, delta: np.ndarray) -> OrthonormalLine:
        """Right-perturb ``U`` by ``delta[:3]`` and rotate ``W`` by ``delta[3]``."""
        U = self.U @ so3_exp(delta[:3])
        return OrthonormalLine(so3_log(project_to_so3(U)), self.theta1 + delta[3])


@dataclass(frozen=True)
class InverseDepthLine:
    """Two inverse depths plus the anchor-frame normalized endpoint pixels."""

    lambda_s: float
    lambda_e: float
    anchor_s: np.ndarray
    anchor_e: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lambda_s", float(self.lambda_s))
        object.__setattr__(self, "lambda_e", float(self.lambda_e))
        object.__setattr__(self, "anchor_s", _frozen(self.anchor_s, (2,)))
        object.__setattr__(self, "anchor_e", _frozen(self.anchor_e, (2,)))
        if not (self.lambda_s > 0 and self.lambda_e > 0):
            raise BehindCameraError("inverse depths must be positive")
        if np.linalg.norm(self.anchor_s - self.anchor_e) <= EPS_PX:
            raise DegenerateLineError("anchor endpoints coincide")

    @property
    def s(self) -> np.ndarray:
        return np.append(self.anchor_s, 1.0)

    @property
    def e(self) -> np.ndarray:
        return np.append(self.anchor_e, 1.0)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        return self.s / self.lambda_s, self.e / self.lambda_e

    def with_depths(self, lambda_s: float, lambda_e: float) -> InverseDepthLine:
        return InverseDepthLine(lambda_s, lambda_e, self.anchor_s, self.anchor_e)


def plucker_from_inverse_depth(line: InverseDepthLine) -> PluckerLine:
    S, E = line.endpoints()
    d = E - S
    if np.linalg.norm(d) < EPS_DEG:
        raise DegenerateLineError("endpoints coincide in 3D")
    return PluckerLine(np.cross(S, E), d)


def inverse_depth_from_plucker(
    line: PluckerLine, anchor_s: np.ndarray, anchor_e: np.ndarray
) -> InverseDepthLine:
    """Intersect the rays through the two anchor pixels with ``line``."""
    depths = []
    for px in (anchor_s, anchor_e):
        p = np.append(np.asarray(px, dtype=float), 1.0)
        # x on line  <=>  x × d = n; with x = a p this is a (p × d) = n
        pd = np.cross(p, line.d)
        denom = pd @ pd
        scale = np.linalg.norm(line.n) + np.linalg.norm(line.d) * np.linalg.norm(p)
        if denom <= (EPS_RAY * np.linalg.norm(line.d) * np.linalg.norm(p)) ** 2:
            raise NoIntersectionError("ray is parallel to the line")
        a = (pd @ line.n) / denom
        if np.linalg.norm(a * pd - line.n) > EPS_RAY * max(scale, abs(a) * np.sqrt(denom)):
            raise NoIntersectionError("ray misses the line")
        if a <= 0:
            raise BehindCameraError(f"intersection depth {a:.3e} is not positive")
        depths.append(a)
    return InverseDepthLine(1.0 / depths[0], 1.0 / depths[1], anchor_s, anchor_e)


def orthonormal_from_plucker(line: PluckerLine) -> OrthonormalLine:
    n, d = line.n, line.d
    nn, nd = np.linalg.norm(n), np.linalg.norm(d)
    nxd = np.cross(n, d)
    if nn <= EPS_DEG or np.linalg.norm(nxd) <= EPS_DEG * max(nn * nd, EPS_DEG):
        raise DegenerateLineError("line passes through the origin; orthonormal form undefined")
    U = np.column_stack([n / nn, d / nd, nxd / np.linalg.norm(nxd)])
    return OrthonormalLine(so3_log(project_to_so3(U)), np.arctan2(nd, nn))


def plucker_from_orthonormal(line: OrthonormalLine) -> PluckerLine:
    U = line.U
    w1, w2 = line.omega
    return PluckerLine(w1 * U[:, 0], w2 * U[:, 1])


def line_motion_matrix(pose: CameraPose) -> np.ndarray:
    """6x6 matrix mapping frame Plücker coordinates to the parent frame."""
    M = np.zeros((6, 6))
    M[:3, :3] = pose.R
    M[:3, 3:] = skew(pose.t) @ pose.R
    M[3:, 3:] = pose.R
    return M


def inverse_line_motion_matrix(pose: CameraPose) -> np.ndarray:
    M = np.zeros((6, 6))
    M[:3, :3] = pose.R.T
    M[:3, 3:] = -pose.R.T @ skew(pose.t)
    M[3:, 3:] = pose.R.T
    return M


def transform_line(line: PluckerLine, pose: CameraPose) -> PluckerLine:
    """Express a frame line in the pose's parent frame."""
    Rd = pose.R @ line.d
    return PluckerLine(pose.R @ line.n + np.cross(pose.t, Rd), Rd)


def invert_transform_line(line: PluckerLine, pose: CameraPose) -> PluckerLine:
    """Express a parent-frame line in the pose's own frame."""
    Rt = pose.R.T
    return PluckerLine(Rt @ (line.n - np.cross(pose.t, line.d)), Rt @ line.d)
