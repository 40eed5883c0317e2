"""Exception hierarchy shared by every module."""


class MeldError(Exception):
    """Base class for all package errors."""


class ValidationError(MeldError, ValueError):
    """Input data violates a type invariant."""


class NumericalError(MeldError, ArithmeticError):
    """A linear-algebra or optimization step failed."""


class SingularMatrixError(NumericalError):
    pass


class IndefiniteHessianError(NumericalError):
    pass


class ConvergenceError(NumericalError):
    pass
