"""Exception hierarchy for the gmlpnp package."""


class PnPError(Exception):
    """Base class for all solver and benchmark errors."""


class InsufficientPointsError(PnPError):
    """Raised when fewer correspondences are supplied than a solver needs."""


class DegenerateGeometryError(PnPError):
    """Raised when the correspondence geometry is rank-deficient (e.g. coplanar points)."""


class DegenerateCovarianceError(PnPError):
    """Raised when a covariance matrix is numerically singular (Cholesky failure)."""


class NonFiniteCostError(PnPError):
    """Raised when the optimization cost blows up to NaN or infinity."""


class BehindCameraError(PnPError):
    """Raised when a point cannot be projected because it lies in the camera's blind region."""


class InvalidPixelError(PnPError):
    """Raised when a pixel is outside the camera model's invertible domain."""


class DegenerateGroundTruthError(PnPError):
    """Raised when an error metric is undefined for the given ground truth."""


class SchemaError(PnPError):
    """Raised when an input file does not match the expected JSON schema."""
