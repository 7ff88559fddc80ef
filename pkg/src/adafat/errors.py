"""Exception and warning types shared across the package.

Validation errors signal bad inputs or configuration; numerical errors signal
a computation that cannot proceed on otherwise well-formed data. The CLI maps
the two families to distinct exit codes.
"""


class AdafatError(Exception):
    """Base class for all package-specific errors."""


# -- validation family -------------------------------------------------------

class NonFiniteError(AdafatError, ValueError):
    """Input matrix contains NaN or infinite entries."""


class RankDeficientError(AdafatError, ValueError):
    """Intercept-augmented design matrix is not of full column rank."""


class TooFewRowsError(AdafatError, ValueError):
    """Not enough observations for the requested design."""


class BadSpecError(AdafatError, ValueError):
    """Configuration violates a documented invariant."""


class MissingOracleError(AdafatError, ValueError):
    """Oracle statistics requested without the simulation ground truth."""


class MissingTruthError(AdafatError, ValueError):
    """False/true discovery counts requested without the hypothesis split."""


# -- numerical family --------------------------------------------------------

class SingularProjectionError(AdafatError, ValueError):
    """Projection target is rank deficient at tolerance."""


class DegenerateProjectionError(AdafatError, ValueError):
    """The ones vector is numerically inside the span of the regressors."""


class EigenFailureError(AdafatError, RuntimeError):
    """Symmetric eigensolver failed to converge."""


class SubsetTooSmallError(AdafatError, ValueError):
    """Index subset too small to identify the latent factor drift.

    When raised from the adaptive procedure, carries the partial iteration
    trace on the ``trace`` attribute.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class SingularGramError(AdafatError, ValueError):
    """Centered loading Gram matrix is singular at tolerance."""


class SingularEigenvalueError(AdafatError, ValueError):
    """A leading eigenvalue is too close to zero to invert."""


class ZeroVarianceError(AdafatError, ValueError):
    """A test column has (numerically) zero residual variance."""


# -- warnings ----------------------------------------------------------------

class DegenerateSpectrumWarning(UserWarning):
    """Trailing eigenvalue gap below separation tolerance; results may be unstable."""


class ConvergenceWarning(UserWarning):
    """Iterative procedure stopped before reaching a fixed point."""


VALIDATION_ERRORS = (
    NonFiniteError,
    RankDeficientError,
    TooFewRowsError,
    BadSpecError,
    MissingOracleError,
    MissingTruthError,
)

NUMERICAL_ERRORS = (
    SingularProjectionError,
    DegenerateProjectionError,
    EigenFailureError,
    SubsetTooSmallError,
    SingularGramError,
    SingularEigenvalueError,
    ZeroVarianceError,
)
