"""Rotations, poses, residuals, and covariance-weighted costs.

Conventions used across the package:

* Rotations are 3x3 orthonormal matrices with det +1; axis-angle vectors
  are in radians with the canonical representative ``||phi|| <= pi``.
* A :class:`Pose` maps camera-frame coordinates into the world frame:
  ``p_world = s * R @ m + t`` for a unit projection ray ``m`` and depth
  ``s``; ``t`` is the camera center expressed in the world frame.
* Covariances are 3x3 symmetric positive-definite and are applied through
  the inverse of their lower Cholesky factor (whitening), never through an
  explicit matrix inverse.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import DegenerateCovarianceError

# Validation tolerances (read-only library constants).
ROTATION_ORTHONORMALITY_TOL = 1e-12
ROTATION_DET_TOL = 1e-12
UNIT_RAY_TOL = 1e-12
COVARIANCE_SYMMETRY_TOL = 1e-12
LOG_NEAR_PI_TOL = 1e-9


def skew(v):
    """Skew-symmetric cross-product matrix: skew(v) @ w == cross(v, w)."""
    v = np.asarray(v, dtype=np.float64)
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def exp_so3(phi):
    """Rotation matrix for an axis-angle vector (total function)."""
    phi = np.asarray(phi, dtype=np.float64)
    return backend.impl.rodrigues(np.ascontiguousarray(phi))


def log_so3(R):
    """Canonical axis-angle vector of a rotation, ``||phi|| <= pi``.

    Near the angle-pi branch the axis is recovered from the symmetric part
    of R; within ``LOG_NEAR_PI_TOL`` of pi the two antipodal representatives
    are equivalent and the one with the dominant component positive is
    returned.
    """
    R = np.asarray(R, dtype=np.float64)
    cos_theta = min(1.0, max(-1.0, (np.trace(R) - 1.0) / 2.0))
    vee = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    sin_theta = min(1.0, float(np.linalg.norm(vee)))
    # atan2 keeps full precision at both ends, where arccos of the clamped
    # trace loses half the significant digits
    theta = np.arctan2(sin_theta, cos_theta)
    if theta < 1e-7:
        # vee = sin(theta) * axis; first-order inverse is enough here
        return vee * (1.0 + theta * theta / 6.0)
    if theta < np.pi - 1e-4:
        return vee * (theta / sin_theta)
    # Near pi: axis from the symmetric part, sign resolved by the vee vector
    # (which vanishes only at exactly pi, where both signs are valid).
    M = (R + R.T) / 2.0 - cos_theta * np.eye(3)
    M /= 1.0 - cos_theta
    axis = np.sqrt(np.maximum(np.diag(M), 0.0))
    k = int(np.argmax(axis))
    for i in range(3):
        if i != k:
            axis[i] = M[i, k] / axis[k]
    axis /= np.linalg.norm(axis)
    sign = np.dot(axis, vee)
    if sign < 0.0:
        axis = -axis
    elif sign == 0.0 and axis[int(np.argmax(np.abs(axis)))] < 0.0:
        axis = -axis
    return theta * axis


def project_to_rotation(M):
    """Closest rotation to a 3x3 matrix (orthogonal Procrustes with det fix)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def quat_from_rotation(R):
    """Unit quaternion (w, x, y, z) with canonical sign w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    m = R.T
    if m[2, 2] < 0:
        if m[0, 0] > m[1, 1]:
            s = 1.0 + m[0, 0] - m[1, 1] - m[2, 2]
            q = [m[1, 2] - m[2, 1], s, m[0, 1] + m[1, 0], m[2, 0] + m[0, 2]]
        else:
            s = 1.0 - m[0, 0] + m[1, 1] - m[2, 2]
            q = [m[2, 0] - m[0, 2], m[0, 1] + m[1, 0], s, m[1, 2] + m[2, 1]]
    else:
        if m[0, 0] < -m[1, 1]:
            s = 1.0 - m[0, 0] - m[1, 1] + m[2, 2]
            q = [m[0, 1] - m[1, 0], m[2, 0] + m[0, 2], m[1, 2] + m[2, 1], s]
        else:
            s = 1.0 + m[0, 0] + m[1, 1] + m[2, 2]
            q = [s, m[1, 2] - m[2, 1], m[2, 0] - m[0, 2], m[0, 1] - m[1, 0]]
    q = np.asarray(q, dtype=np.float64) * (0.5 / np.sqrt(s))
    if q[0] < 0.0:
        q = -q
    return q


def rotation_from_quat(q):
    """Rotation matrix for a quaternion (w, x, y, z); normalizes its input."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_defect(R):
    """Max-elementwise deviation of R'R from identity and |det - 1|."""
    R = np.asarray(R, dtype=np.float64)
    ortho = float(np.max(np.abs(R.T @ R - np.eye(3))))
    det = abs(float(np.linalg.det(R)) - 1.0)
    return ortho, det


def require_rotation(R, tol=ROTATION_ORTHONORMALITY_TOL):
    """Validate a rotation matrix; raises ValueError on defect."""
    R = np.ascontiguousarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {R.shape}")
    ortho, det = rotation_defect(R)
    if ortho > tol or det > ROTATION_DET_TOL:
        raise ValueError(
            f"matrix is not a rotation (orthonormality defect {ortho:.3e}, det defect {det:.3e})"
        )
    return R


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping camera-frame coordinates into the world frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = require_rotation(self.rotation).copy()
        t = np.ascontiguousarray(self.translation, dtype=np.float64).reshape(3).copy()
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    def inverse(self):
        """World-to-camera transform."""
        Rt = self.rotation.T.copy()
        return Pose(Rt, -(Rt @ self.translation))

    def compose(self, other):
        """self applied after other: (self o other)(x) = self(other(x))."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def transform_points(self, pts):
        """Map (n, 3) camera-frame points into the world frame."""
        pts = np.asarray(pts, dtype=np.float64)
        return pts @ self.rotation.T + self.translation


def as_correspondences(points, rays):
    """Validate and normalize correspondence arrays to float64 (n, 3) pairs."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    rays = np.ascontiguousarray(rays, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(f"points must be (n, 3), got {points.shape}")
    if rays.shape != points.shape:
        raise ValueError(f"rays shape {rays.shape} does not match points {points.shape}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite values")
    if not np.all(np.isfinite(rays)):
        raise ValueError("rays contain non-finite values")
    norms = np.linalg.norm(rays, axis=1)
    if np.max(np.abs(norms - 1.0)) > UNIT_RAY_TOL:
        raise ValueError(
            f"rays must be unit-norm within {UNIT_RAY_TOL:g} "
            f"(worst defect {np.max(np.abs(norms - 1.0)):.3e})"
        )
    return points, rays


def covariance_cholesky(cov):
    """Lower Cholesky factor of a covariance.

    Raises ValueError if the matrix is not symmetric within
    ``COVARIANCE_SYMMETRY_TOL`` and DegenerateCovarianceError if the
    factorization fails (matrix not numerically positive-definite).
    """
    cov = np.ascontiguousarray(cov, dtype=np.float64)
    if cov.shape != (3, 3):
        raise ValueError(f"covariance must be 3x3, got {cov.shape}")
    if np.max(np.abs(cov - cov.T)) > COVARIANCE_SYMMETRY_TOL:
        raise ValueError("covariance is not symmetric")
    L, ok = backend.impl.cholesky3(cov)
    if not ok:
        raise DegenerateCovarianceError(
            "covariance is not positive-definite (Cholesky failed)"
        )
    return L


def whitening_matrix(cov):
    """Inverse lower Cholesky factor W of a covariance, so cov^-1 = W'W."""
    return backend.impl.whitening_from_cholesky(covariance_cholesky(cov))


def residuals(points, rays, pose, scales):
    """Object-space residuals p_i - (s_i * R m_i + t)."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    rays = np.ascontiguousarray(rays, dtype=np.float64)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    return backend.impl.residual_array(
        points, rays, pose.rotation, pose.translation, scales
    )


def mahalanobis_sq(e, cov):
    """Squared Mahalanobis norm e' cov^-1 e, for one residual or a batch."""
    W = whitening_matrix(cov)
    e = np.asarray(e, dtype=np.float64)
    we = e @ W.T
    return np.sum(we * we, axis=-1)


def cost(points, rays, pose, scales, cov):
    """Half the covariance-weighted sum of squared residuals."""
    e = residuals(points, rays, pose, scales)
    W = whitening_matrix(cov)
    return backend.impl.whitened_cost(e, W)
