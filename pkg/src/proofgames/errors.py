"""Exception hierarchy shared across the package."""


class ProofGamesError(Exception):
    """Base class for all package errors."""


class DomainError(ProofGamesError, ValueError):
    """A parameter lies outside its admissible range."""


class UnknownInstanceError(ProofGamesError, KeyError):
    """An instance is not part of the decision problem."""


class UnknownObservationError(ProofGamesError, KeyError):
    """A tabular strategy was queried at an observation it has no row for."""


class ProtocolViolation(ProofGamesError):
    """An agent produced a message outside its message space."""


class BudgetExceeded(ProofGamesError):
    """An exhaustive enumeration or grid scan exceeded its configured cap."""


class NotTerminatedError(ProofGamesError):
    """A decision was requested from a transcript that has none."""


class GenerationError(ProofGamesError):
    """Dataset generation could not satisfy a bucket target."""


class SingularityError(ProofGamesError, ArithmeticError):
    """A Hessian block is too ill-conditioned to solve against."""
