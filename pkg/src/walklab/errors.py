"""Exception types raised by walklab operations."""


class WalklabError(Exception):
    """Base class for all walklab errors."""


class NonErgodic(WalklabError):
    """The chain is not strongly connected or not aperiodic."""


class NotReversible(WalklabError):
    """Detailed balance fails beyond tolerance."""


class ResultNotErgodic(WalklabError):
    """A constructed chain fails ergodicity and is not silently repaired."""


class SpecViolation(WalklabError):
    """A graph/marked-set specification violates its structural conditions."""


class OutOfRange(WalklabError):
    """A numeric parameter lies outside its admissible interval."""


class SolverDivergence(WalklabError):
    """An iterative linear solve stalled before reaching its residual target."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateTopEigenvalue(WalklabError):
    """A second discriminant eigenvalue sits at (or above) the top eigenvalue 1."""


class LimitDisagreement(WalklabError):
    """Two independent routes to the same quantity disagree beyond tolerance."""


class CompletionFailure(WalklabError):
    """Orthonormal completion of a partial isometry degenerated."""


class NonIntegralScale(WalklabError):
    """A rescaling factor must be a positive integer."""


class WindowOutOfRange(WalklabError):
    """A counting window exceeds the rescaled sequence."""


class PreconditionUnmet(WalklabError):
    """A combinatorial statement's hypotheses do not hold for the given input."""


class EventNeverObserved(WalklabError):
    """A conditioning event had empirical frequency zero."""


class HypothesisViolated(WalklabError):
    """Input parameters violate the hypotheses of the statement being checked."""
