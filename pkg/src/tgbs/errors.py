"""Exception hierarchy for the sampler.

Three failure families are kept distinct because callers react differently:
bad arguments are caller bugs (ValueError), states or blocks that stop being
physical are data problems (NumericalDomainError), and accumulated floating
point cancellation is a run-at-higher-precision problem (PrecisionError).
"""


class TgbsError(Exception):
    """Base class for package-specific failures."""


class NumericalDomainError(TgbsError):
    """A matrix or probability left its mathematically valid domain.

    Raised when V_B + I is singular or not positive definite, when a
    covariance matrix fails the physicality check, or when a single-branch
    overlap falls outside [0, 1] by more than the probability tolerance.
    """


class PrecisionError(TgbsError):
    """Accumulated cancellation pushed an aggregate outside its domain.

    The mixture coefficients are signed, so the no-click probability is a
    difference of large terms. When the compensated sum still lands outside
    [-tau, 1 + tau] the run needs a wider accumulator, not a clamp.
    """


class ImpossibleOutcomeError(TgbsError):
    """A forced measurement outcome has probability below tolerance."""


class DimacsParseError(TgbsError):
    """A DIMACS graph file violates the clique-format grammar.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)
        self.line = line
