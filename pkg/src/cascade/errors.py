"""Exception and warning types shared across the package."""


class CascadeError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(CascadeError):
    """An API precondition or invariant was violated by the caller."""


class DimensionError(ContractError):
    """Operand shapes are incompatible."""


class SingularMatrixError(CascadeError):
    """A matrix is singular (or numerically so) where an inverse is needed."""


class ParseError(CascadeError, ValueError):
    """An input file is malformed; the message names the offending line."""


class MissingStageError(ContractError):
    """A required earlier pipeline stage has not been run yet."""


class StageError(CascadeError):
    """A pipeline sub-stage failed; the message names the stage."""


class CascadeWarning(UserWarning):
    """Non-fatal conditions, e.g. zero vectors substituted for missing data."""
