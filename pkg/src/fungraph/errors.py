"""Exception hierarchy shared across the package."""


class FunGraphError(Exception):
    """Base class for all package errors."""


class SchemaError(FunGraphError, ValueError):
    pass


class ParseError(FunGraphError, ValueError):
    pass


class DataError(FunGraphError, ValueError):
    pass


class EncodingError(FunGraphError, ValueError):
    pass


class DomainError(FunGraphError, ValueError):
    pass


class ConditioningError(FunGraphError, ValueError):
    pass


class DimensionError(FunGraphError, ValueError):
    pass


class DegenerateError(FunGraphError, ValueError):
    """Raised when an input carries no usable signal (zero response, flat spectrum)."""


class NumericalError(FunGraphError, ArithmeticError):
    pass


class GenerationError(FunGraphError, RuntimeError):
    pass


class AggregationError(FunGraphError, ValueError):
    pass
