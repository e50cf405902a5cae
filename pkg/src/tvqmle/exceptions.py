"""Exception and warning classes raised by tvqmle."""


class TVQMLEError(Exception):
    """Base class for all package errors."""


class DegenerateDesign(TVQMLEError):
    """The local linear design at a grid point is (numerically) singular."""


class EmptyWindow(TVQMLEError):
    """No observation falls inside the kernel window."""


class ModelEvaluationError(TVQMLEError, FloatingPointError):
    """Base class for failures of the likelihood recursions."""


class NonPositiveVolatility(ModelEvaluationError):
    """A conditional variance became non-positive."""


class SingularCovariance(ModelEvaluationError):
    """The innovation covariance matrix is singular or not positive definite."""


class RankDeficientDesign(TVQMLEError):
    """A weighted least-squares normal matrix is too ill-conditioned."""


class AllCandidatesFailed(TVQMLEError):
    """Cross-validation could not score any candidate bandwidth."""


class InsufficientReplications(TVQMLEError, ValueError):
    """Too few bootstrap replications were requested."""


class ExplosivePath(TVQMLEError):
    """A simulated path exceeded the explosion threshold."""


class NearSingularInformation(UserWarning):
    """Eigenvalue clamping was needed to invert the averaged Hessian."""


class ConvergenceWarning(UserWarning):
    """A local fit stopped before reaching the gradient tolerance."""


class StationarityWarning(UserWarning):
    """A fitted parameter lies outside the stationarity/invertibility region."""
