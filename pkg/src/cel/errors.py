"""Exception hierarchy shared by every module."""


class CelError(Exception):
    """Base class for all errors raised by the package."""


# -- document / expression errors (CLI exit code 1) --------------------------

class SpecError(CelError, ValueError):
    """Malformed metric document or expression."""

    def __init__(self, message, *, offset=None, line=None):
        self.raw = message
        self.offset = offset
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"offset {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class DSLSyntaxError(SpecError):
    pass


class UnknownIdentifier(SpecError):
    pass


class NonConstantExponent(SpecError):
    pass


class MissingDimension(SpecError):
    pass


class DuplicateEntry(SpecError):
    pass


class IndexOutOfRange(SpecError):
    pass


class CoordinateMismatch(SpecError):
    pass


class UnknownEntry(CelError, KeyError):
    pass


# -- numerical errors (CLI exit code 2) --------------------------------------

class NumericError(CelError, ArithmeticError):
    pass


class SingularPoint(NumericError):
    """Division by a jet with vanishing constant term."""


class DomainError(SingularPoint):
    """Elementary function evaluated outside its domain."""


class SingularMetric(NumericError):
    def __init__(self, message, smallest_eigenvalue=None):
        self.smallest_eigenvalue = smallest_eigenvalue
        super().__init__(message)


class OrderExhausted(NumericError):
    """Not enough jet order left to take another derivative."""


class NearRankBoundary(NumericError):
    pass


class IsomorphismViolation(NumericError):
    pass


class Unavailable(NumericError):
    """A quantity cannot be formed at the requested point/order."""


# -- internal consistency checks (CLI exit code 3) ---------------------------

class InternalCheckFailed(CelError, AssertionError):
    """A postcondition or cross-check between two code paths did not hold."""


class SymmetryCheckFailed(InternalCheckFailed):
    pass
