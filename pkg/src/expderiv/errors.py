"""Exception hierarchy shared by every module of the package."""


class ExpDerivError(Exception):
    """Base class for all errors raised by expderiv."""


class DomainError(ExpDerivError, ValueError):
    """E applied outside its domain (symbolic or numeric)."""


class ShapeError(ExpDerivError, ValueError):
    """Arity, size or layering mismatch."""


class PreconditionError(ExpDerivError, ValueError):
    pass


class UnsupportedError(ExpDerivError):
    pass


class ParseError(ExpDerivError, SyntaxError):
    """Malformed term or formula text; ``pos`` is the offending offset."""

    def __init__(self, message, pos=None, text=None):
        self.pos = pos
        self.source = text
        if pos is not None:
            message = f"{message} at position {pos}"
        super().__init__(message)


class SingularJacobian(ExpDerivError, ArithmeticError):
    pass


class NoConvergence(ExpDerivError, ArithmeticError):
    pass


class HenselConditionFailed(ExpDerivError, ArithmeticError):
    pass


class InfeasibleTarget(ExpDerivError, ValueError):
    pass
