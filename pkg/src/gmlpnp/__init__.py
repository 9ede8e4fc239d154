"""Camera-model-decoupled PnP with joint anisotropic noise-covariance estimation.

The solvers consume 3D object points paired with unit projection rays, so
any invertible camera model plugs in through its unprojection function.
"""

from .backend import active_backend
from .bench import (
    GridPoint,
    NoiseConfig,
    SceneConfig,
    TrialRecord,
    generate_scene,
    rotation_error_deg,
    run_experiment,
    translation_error,
)
from .cameras import MeiIntrinsics, PinholeIntrinsics
from .errors import (
    BehindCameraError,
    DegenerateCovarianceError,
    DegenerateGeometryError,
    DegenerateGroundTruthError,
    InsufficientPointsError,
    InvalidPixelError,
    NonFiniteCostError,
    PnPError,
    SchemaError,
)
from .geometry import Pose, cost, exp_so3, log_so3, mahalanobis_sq, residuals, skew
from .gml_solver import (
    IterationDiagnostics,
    OuterLoopConfig,
    SolveReport,
    determinant_criterion,
    estimate_covariance,
    solve,
)
from .linear_init import solve_linear_init
from .ml_solver import (
    InnerSolveConfig,
    InnerSolveResult,
    optimal_scales,
    pose_gradient,
    solve_fixed_covariance,
)

__version__ = "0.1.0"

__all__ = [
    "BehindCameraError",
    "DegenerateCovarianceError",
    "DegenerateGeometryError",
    "DegenerateGroundTruthError",
    "GridPoint",
    "InnerSolveConfig",
    "InnerSolveResult",
    "InsufficientPointsError",
    "InvalidPixelError",
    "IterationDiagnostics",
    "MeiIntrinsics",
    "NoiseConfig",
    "NonFiniteCostError",
    "OuterLoopConfig",
    "PinholeIntrinsics",
    "PnPError",
    "Pose",
    "SceneConfig",
    "SchemaError",
    "SolveReport",
    "TrialRecord",
    "active_backend",
    "cost",
    "determinant_criterion",
    "estimate_covariance",
    "exp_so3",
    "generate_scene",
    "log_so3",
    "mahalanobis_sq",
    "optimal_scales",
    "pose_gradient",
    "residuals",
    "rotation_error_deg",
    "run_experiment",
    "skew",
    "solve",
    "solve_fixed_covariance",
    "solve_linear_init",
    "translation_error",
]
