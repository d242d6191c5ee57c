"""Exception hierarchy shared by every module."""


class GeometryError(Exception):
    """Base class for all errors raised by blendcurv."""


class DomainError(GeometryError, ValueError):
    """A point lies outside its chart."""


class EvaluationError(GeometryError, ArithmeticError):
    """A field produced non-finite values."""


class DegeneracyError(GeometryError, ValueError):
    """Vectors or frames are linearly dependent where independence is required."""


class InversionError(GeometryError, ArithmeticError):
    """A matrix that must be inverted is (numerically) singular."""


class ContractError(GeometryError, ValueError):
    """An argument violates an operation's precondition."""
