"""Invertible camera models mapping pixels to unit projection rays.

The solvers never see a camera: they consume unit rays. These models supply
the pixel <-> ray conversion for the two calibrations exercised by the
benchmark, a plain pinhole and a unified catadioptric/fisheye model with a
mirror offset ``xi`` plus Brown radial-tangential distortion.

Coordinates follow the usual computer-vision convention: x right, y down,
z through the image plane. All operations are batched over (n, 2) pixel and
(n, 3) point arrays.
"""

from dataclasses import dataclass

import numpy as np

from .errors import BehindCameraError, InvalidPixelError

MEI_UNDISTORT_MAX_ITERATIONS = 20
MEI_UNDISTORT_TOL = 1e-12


@dataclass(frozen=True)
class PinholeIntrinsics:
    """Focal lengths and principal point, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def project(self, x):
        """Project camera-frame points (n, 3) to pixels (n, 2)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
        z = x[:, 2]
        if np.any(z <= 0.0):
            raise BehindCameraError("point has non-positive depth")
        u = np.empty((x.shape[0], 2))
        u[:, 0] = self.fx * x[:, 0] / z + self.cx
        u[:, 1] = self.fy * x[:, 1] / z + self.cy
        return u

    def unproject(self, u):
        """Unit rays (n, 3) with positive z for pixels (n, 2)."""
        u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
        m = np.empty((u.shape[0], 3))
        m[:, 0] = (u[:, 0] - self.cx) / self.fx
        m[:, 1] = (u[:, 1] - self.cy) / self.fy
        m[:, 2] = 1.0
        return m / np.linalg.norm(m, axis=1, keepdims=True)


@dataclass(frozen=True)
class MeiIntrinsics:
    """Unified-model calibration: mirror offset xi, affine part, distortion.

    xi = 0 with zero distortion degenerates exactly to the pinhole model.
    """

    xi: float
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.xi < 0:
            raise ValueError("mirror parameter xi must be non-negative")

    def _distort(self, mx, my):
        r2 = mx * mx + my * my
        radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
        dx = 2.0 * self.p1 * mx * my + self.p2 * (r2 + 2.0 * mx * mx)
        dy = self.p1 * (r2 + 2.0 * my * my) + 2.0 * self.p2 * mx * my
        return radial * mx + dx, radial * my + dy

    def project(self, x):
        """Project camera-frame points (n, 3) to pixels (n, 2).

        Points in the blind region behind the effective projection center
        (z + xi * ||x|| <= 0) raise BehindCameraError.
        """
        x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
        d = np.linalg.norm(x, axis=1)
        if np.any(d == 0.0):
            raise BehindCameraError("cannot project the origin")
        denom = x[:, 2] + self.xi * d
        if np.any(denom <= 1e-12 * d):
            raise BehindCameraError("point lies in the model's blind region")
        mx = x[:, 0] / denom
        my = x[:, 1] / denom
        dx, dy = self._distort(mx, my)
        u = np.empty((x.shape[0], 2))
        u[:, 0] = self.fx * dx + self.cx
        u[:, 1] = self.fy * dy + self.cy
        return u

    def _undistort(self, mdx, mdy):
        # Fixed-point iteration m <- (m_d - tangential(m)) / radial(m);
        # exact in one step when all distortion coefficients are zero.
        mx = mdx.copy()
        my = mdy.copy()
        for _ in range(MEI_UNDISTORT_MAX_ITERATIONS):
            r2 = mx * mx + my * my
            radial = 1.0 + self.k1 * r2 + self.k2 * r2 * r2
            dx = 2.0 * self.p1 * mx * my + self.p2 * (r2 + 2.0 * mx * mx)
            dy = self.p1 * (r2 + 2.0 * my * my) + 2.0 * self.p2 * mx * my
            if np.any(radial <= 0.0) or not (
                np.all(np.isfinite(radial)) and np.all(np.isfinite(dx))
            ):
                raise InvalidPixelError("undistortion diverged")
            nx = (mdx - dx) / radial
            ny = (mdy - dy) / radial
            delta = np.max(np.abs(nx - mx) + np.abs(ny - my))
            mx, my = nx, ny
            if delta < MEI_UNDISTORT_TOL:
                return mx, my
        raise InvalidPixelError(
            f"undistortion did not converge in {MEI_UNDISTORT_MAX_ITERATIONS} iterations"
        )

    def unproject(self, u):
        """Unit rays on the viewing sphere for pixels (n, 2).

        Raises InvalidPixelError outside the model's invertible domain
        (non-convergent undistortion, or beyond the valid radius for xi > 1).
        """
        u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
        mdx = (u[:, 0] - self.cx) / self.fx
        mdy = (u[:, 1] - self.cy) / self.fy
        mx, my = self._undistort(mdx, mdy)
        r2 = mx * mx + my * my
        disc = 1.0 + (1.0 - self.xi * self.xi) * r2
        if np.any(disc < 0.0):
            raise InvalidPixelError("pixel outside the valid radius for this xi")
        factor = (self.xi + np.sqrt(disc)) / (1.0 + r2)
        m = np.empty((u.shape[0], 3))
        m[:, 0] = factor * mx
        m[:, 1] = factor * my
        m[:, 2] = factor - self.xi
        return m / np.linalg.norm(m, axis=1, keepdims=True)
