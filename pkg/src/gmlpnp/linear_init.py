"""Linear object-space resection used to seed the iterative solvers.

Each unit ray m_i constrains the camera-frame point X_i = R'p_i + t'
(world-to-camera) to be parallel to m_i, i.e. orthogonal to any basis
(r_i, s_i) of the ray's orthogonal complement. Stacking the 2n equations
r_i'(R'p_i + t') = 0 and s_i'(R'p_i + t') = 0 gives a homogeneous linear
system in the 12 entries of [R'|t'], solved by the smallest right singular
vector. The 3x3 block is projected to SO(3) by orthogonal Procrustes, the
translation rescaled accordingly, the global sign resolved so the median
depth along the rays is positive, and the inverse transform returned as the
camera-in-world pose.

The system is plain (unweighted) least squares: the initializer only has to
land inside the basin of attraction of the iterative refinement.
"""

import numpy as np

from .errors import DegenerateGeometryError, InsufficientPointsError
from .geometry import Pose, as_correspondences, project_to_rotation

MIN_POINTS = 6
RANK_RATIO_LIMIT = 1e12


def _complement_basis(m):
    """Two unit vectors spanning the orthogonal complement of unit m.

    Householder construction: the reflection H mapping m onto -sign(m_z) e3
    is orthogonal and involutory, so its first two columns are orthonormal
    and orthogonal to m. Deterministic and stable for every ray direction.
    """
    sign = 1.0 if m[2] >= 0.0 else -1.0
    v = m.copy()
    v[2] += sign
    beta = 2.0 / np.dot(v, v)
    r = -beta * v[0] * v
    r[0] += 1.0
    s = -beta * v[1] * v
    s[1] += 1.0
    return r, s


def _extract_world_to_camera(v, centroid, scale):
    """Pose candidate [R'|t'] from a stacked 12-vector, denormalized."""
    M = v[:9].reshape(3, 3)
    R_wc = project_to_rotation(M)
    # homogeneous scale relating M to its rotation; positive when det(M) > 0
    c = float(np.trace(R_wc.T @ M)) / 3.0
    t_norm = v[9:12] / c
    # points were solved as p' = (p - centroid)/scale, so the metric
    # world-to-camera translation is scale * t' - R' centroid
    t_wc = scale * t_norm - R_wc @ centroid
    return R_wc, t_wc


def solve_linear_init(points, rays):
    """Resect a rough camera-in-world pose from n >= 6 correspondences.

    Raises InsufficientPointsError for n < 6 and DegenerateGeometryError
    when the stacked system is rank-deficient beyond its single expected
    null direction (coplanar or otherwise degenerate object points).
    """
    points, rays = as_correspondences(points, rays)
    n = points.shape[0]
    if n < MIN_POINTS:
        raise InsufficientPointsError(
            f"linear initialization needs at least {MIN_POINTS} points, got {n}"
        )

    # Normalize points for conditioning: centroid to origin, mean norm sqrt(3).
    centroid = points.mean(axis=0)
    centered = points - centroid
    scale = np.mean(np.linalg.norm(centered, axis=1)) / np.sqrt(3.0)
    if scale < 1e-12:
        raise DegenerateGeometryError("object points are coincident")
    normalized = centered / scale

    A = np.empty((2 * n, 12))
    for i in range(n):
        r, s = _complement_basis(rays[i])
        p = normalized[i]
        A[2 * i, 0:3] = r[0] * p
        A[2 * i, 3:6] = r[1] * p
        A[2 * i, 6:9] = r[2] * p
        A[2 * i, 9:12] = r
        A[2 * i + 1, 0:3] = s[0] * p
        A[2 * i + 1, 3:6] = s[1] * p
        A[2 * i + 1, 6:9] = s[2] * p
        A[2 * i + 1, 9:12] = s

    _, sv, Vt = np.linalg.svd(A, full_matrices=False)
    # A valid configuration leaves exactly one null direction; a second tiny
    # singular value means the geometry does not pin down the pose.
    if sv[0] > RANK_RATIO_LIMIT * max(sv[10], np.finfo(np.float64).tiny):
        raise DegenerateGeometryError(
            "correspondence geometry is rank-deficient (coplanar object points?)"
        )

    v = Vt[11]
    if np.linalg.det(v[:9].reshape(3, 3)) < 0.0:
        v = -v
    R_wc, t_wc = _extract_world_to_camera(v, centroid, scale)
    depths = np.sum((points @ R_wc.T + t_wc) * rays, axis=1)
    if np.median(depths) < 0.0:
        R_wc, t_wc = _extract_world_to_camera(-v, centroid, scale)

    return Pose(R_wc, t_wc).inverse()
