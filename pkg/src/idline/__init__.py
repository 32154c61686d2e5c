"""Inverse-depth 3D line parametrization for point-line sliding-window bundle adjustment.

Subpackages and modules:

- ``geometry``: poses, Plücker / orthonormal / inverse-depth lines and conversions
- ``residuals``: point, line and odometry residuals with analytic Jacobians
- ``initialization``: plane-intersection inverse-depth line initialization
- ``solver``: sliding-window state, joint LM, two-step solver, marginalization
- ``synthetic``: synthetic worlds, observations and solver starting points
- ``harness``: config files, ATE/RPE metrics, benchmarks and the ``idline`` CLI
"""

from .errors import (
    BehindCameraError,
    ConfigError,
    DegenerateLineError,
    DegenerateProjectionError,
    GeometryError,
    InsufficientParallaxError,
    MissingStateError,
    NoIntersectionError,
    RotationOnlyDegenerateError,
)
from .geometry import (
    CameraPose,
    InverseDepthLine,
    OrthonormalLine,
    PluckerLine,
    inverse_depth_from_plucker,
    orthonormal_from_plucker,
    plucker_from_inverse_depth,
    plucker_from_orthonormal,
    transform_line,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .residuals import CameraIntrinsics, LineObservation, OdometryFactor, line_residual, project_line

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "CameraIntrinsics",
    "CameraPose",
    "ConfigError",
    "DegenerateLineError",
    "DegenerateProjectionError",
    "GeometryError",
    "InsufficientParallaxError",
    "InverseDepthLine",
    "KERNEL_BACKEND",
    "LineObservation",
    "MissingStateError",
    "NoIntersectionError",
    "OdometryFactor",
    "OrthonormalLine",
    "PluckerLine",
    "RotationOnlyDegenerateError",
    "inverse_depth_from_plucker",
    "line_residual",
    "orthonormal_from_plucker",
    "plucker_from_inverse_depth",
    "plucker_from_orthonormal",
    "project_line",
    "transform_line",
]
