"""Exception hierarchy."""


class SignRegError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SignRegError, ValueError):
    """A problem or coefficient violates a hypothesis of the operator class."""


class InvalidCoefficient(ValidationError):
    pass


class NonPositiveLeadingCoefficient(ValidationError):
    pass


class IllegalAtomOrder(ValidationError):
    pass


class DegenerateBoundaryFunctional(ValidationError):
    pass


class MeshMissingAtom(SignRegError):
    pass


class NotPositiveDefinite(SignRegError):
    def __init__(self, message, min_pivot=None, index=None):
        super().__init__(message)
        self.min_pivot = min_pivot
        self.index = index


class PointNotOnMesh(SignRegError, ValueError):
    pass


class OutOfDomain(SignRegError, ValueError):
    pass


class EmptyRestriction(SignRegError, ValueError):
    pass


class NotProposition11Shape(SignRegError):
    """The operator is not of the clamped-free-with-endpoint-springs form the chase needs."""


class ChainSearchFailed(SignRegError):
    pass


class SNotPositive(SignRegError):
    pass


class SigmaNotPositive(SignRegError):
    pass


class ShapeMismatch(SignRegError):
    pass


class ParseError(SignRegError, ValueError):
    def __init__(self, message, line=None, column=None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column
