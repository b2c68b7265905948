"""Exception hierarchy shared by every module of the package."""


class ODError(Exception):
    """Base class for all package errors."""


class ValidationError(ODError, ValueError):
    """Input data violates a structural or domain invariant."""


class ParseError(ValidationError):
    """A CSV row could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateKeyError(ParseError):
    pass


class UnknownStationError(ValidationError):
    pass


class MissingPairError(ValidationError):
    pass


class NumericalError(ODError):
    """Base for failures of the iterative solvers."""


class ConvergenceError(NumericalError):
    """An iterative procedure hit its iteration cap.

    ``residual`` holds the last measured residual and ``trace`` whatever
    per-iteration history the caller recorded.
    """

    def __init__(self, message, residual=float("nan"), iterations=0, trace=None):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.residual = residual
        self.iterations = iterations
        self.trace = trace if trace is not None else []


class InfeasibleError(NumericalError):
    """The constraint system admits no (strictly positive) solution."""

    def __init__(self, message, bracket=None):
        if bracket is not None:
            message = f"{message}; attainable range approx. [{bracket[0]:.6g}, {bracket[1]:.6g}]"
        super().__init__(message)
        self.bracket = bracket
