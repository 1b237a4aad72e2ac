"""Exception hierarchy shared across the package.

Every error raised by the library derives from :class:`EdgedynError`, so
callers can catch one type at the CLI boundary.  Names follow the failure
they report, not the operation that raised them.
"""


class EdgedynError(Exception):
    """Base class for all library errors."""


# -- model validation ---------------------------------------------------------

class RowSumNonzero(EdgedynError):
    """A generator row does not sum to zero."""


class NegativeOffDiagonal(EdgedynError):
    """A generator has a negative off-diagonal rate."""


class Reducible(EdgedynError):
    """The background chain is not irreducible."""


class ZeroRateAtom(EdgedynError):
    """A rate-pair atom has zero total rate, so no slot transition exists."""


class DegenerateDenominator(EdgedynError):
    """The chain is frozen (E P = E R = 1); no unique stationary law."""


class UnstableSecondMoment(EdgedynError):
    """E[(P+R-1)^2] >= 1: the geometric sum behind the variance diverges."""


# -- numerics -----------------------------------------------------------------

class SingularSystem(EdgedynError):
    """A linear solve hit a (numerically) singular matrix."""


class NumericallyUnstable(EdgedynError):
    """A computation left its documented stability envelope."""


class StepSizeUnderflow(EdgedynError):
    """The ODE integrator could not proceed at the requested tolerance."""


class NoConvergence(EdgedynError):
    """An iterative method exhausted its iteration budget."""

    def __init__(self, message: str, max_iters: int | None = None):
        super().__init__(message)
        self.max_iters = max_iters


class QuadratureFailure(EdgedynError):
    """Adaptive quadrature reported an unreliable result."""


class StepTooLarge(EdgedynError):
    """SDE step size violates the stability guard dt * rate < 0.1."""


class MgfDiverges(EdgedynError):
    """The joint moment generating function is not finite where needed."""


class NoFiniteMaximizer(EdgedynError):
    """A Legendre supremum has no finite maximizer (rate is +inf)."""


class UnsupportedDimension(EdgedynError):
    """The operation is implemented only for a restricted dimension."""


class InsufficientReplications(EdgedynError):
    """Ensemble statistics need at least two replications."""


# -- CLI ----------------------------------------------------------------------

class ConfigInvalid(EdgedynError):
    """An experiment configuration failed validation."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class TaskFailed(EdgedynError):
    """A CLI task failed; carries the inner error."""

    def __init__(self, message: str, inner: Exception | None = None):
        super().__init__(message)
        self.inner = inner
