"""Maximum-likelihood pose estimation under a known noise covariance.

Block relaxation between the closed-form per-point depths and damped
Gauss-Newton steps on the pose, minimizing half the covariance-weighted sum
of squared object-space residuals. This solver is both a standalone
estimator (identity or externally known covariance) and the inner step of
the iterated-GLS solver in :mod:`gmlpnp.gml_solver`.

Conventions:

* Rotation updates are right-multiplicative, R <- R @ exp_so3(delta_phi);
  the analytic gradient matches central finite differences of the cost
  under exactly that perturbation.
* Levenberg-Marquardt damping scales the diagonal of the normal matrix
  (multiplicative, x10 up / /10 down), which keeps the accepted-step
  sequence invariant under uniform rescaling of the covariance.
* Negative optimal depths are kept, never clamped; cheirality screening is
  the caller's concern.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import InsufficientPointsError, NonFiniteCostError
from .geometry import Pose, as_correspondences, whitening_matrix

MIN_POINTS = 6


@dataclass(frozen=True)
class InnerSolveConfig:
    """Termination and damping knobs for the Gauss-Newton iteration."""

    max_gn_iterations: int = 20
    gradient_tolerance: float = 1e-10
    step_tolerance: float = 1e-12
    damping_initial: float = 1e-6

    def __post_init__(self):
        if self.max_gn_iterations < 1:
            raise ValueError("max_gn_iterations must be positive")
        if not (
            self.gradient_tolerance >= 0
            and self.step_tolerance >= 0
            and self.damping_initial > 0
        ):
            raise ValueError("tolerances must be non-negative and damping positive")


@dataclass(frozen=True)
class InnerSolveResult:
    pose: Pose
    scales: np.ndarray
    final_cost: float
    gn_iterations: int
    converged: bool


def optimal_scales(points, rays, pose, covariance):
    """Closed-form depths minimizing the weighted cost at a fixed pose."""
    points, rays = as_correspondences(points, rays)
    W = whitening_matrix(covariance)
    return backend.impl.optimal_scales(points, rays, pose.rotation, pose.translation, W)


def pose_gradient(points, rays, pose, scales, covariance):
    """Gradient of the weighted cost w.r.t. (rotation tangent, translation).

    The first three entries differentiate along the right-multiplicative
    rotation perturbation, the last three along the translation.
    """
    points, rays = as_correspondences(points, rays)
    scales = np.ascontiguousarray(scales, dtype=np.float64)
    W = whitening_matrix(covariance)
    e = backend.impl.residual_array(points, rays, pose.rotation, pose.translation, scales)
    return backend.impl.gradient_fixed_scales(rays, pose.rotation, scales, e, W)


def solve_fixed_covariance(points, rays, covariance, init, config=None):
    """Minimize the weighted cost from an initial pose hypothesis.

    Damping enforces a monotonically non-increasing cost across accepted
    steps; the iteration stops on the gradient norm, the step norm, or the
    iteration cap. Raises NonFiniteCostError if the cost blows up.
    """
    points, rays = as_correspondences(points, rays)
    if points.shape[0] < MIN_POINTS:
        raise InsufficientPointsError(
            f"solver needs at least {MIN_POINTS} points, got {points.shape[0]}"
        )
    cfg = config if config is not None else InnerSolveConfig()
    W = whitening_matrix(covariance)
    R, t, s, cost, iters, converged, ok = backend.impl.inner_solve(
        points,
        rays,
        W,
        np.ascontiguousarray(init.rotation),
        np.ascontiguousarray(init.translation),
        cfg.max_gn_iterations,
        cfg.gradient_tolerance,
        cfg.step_tolerance,
        cfg.damping_initial,
    )
    if not ok:
        raise NonFiniteCostError("cost became non-finite during optimization")
    return InnerSolveResult(
        pose=Pose(R, t),
        scales=s,
        final_cost=float(cost),
        gn_iterations=int(iters),
        converged=bool(converged),
    )
