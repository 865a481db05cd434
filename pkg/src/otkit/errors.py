"""Exception hierarchy.

Validation problems derive from :class:`ValidationError` (also a
``ValueError``); floating-point breakdowns derive from
:class:`NumericFailure` (also an ``ArithmeticError``).  The CLI maps the
two families to exit codes 2 and 3.
"""


class OTError(Exception):
    """Base class for every error raised by otkit."""


class ValidationError(OTError, ValueError):
    """Input violates a documented precondition."""


class NegativeEntry(ValidationError):
    pass


class NotNormalized(ValidationError):
    pass


class NonPositiveHistogram(ValidationError):
    pass


class ZeroEntryInLogMode(NonPositiveHistogram):
    pass


class NonPositiveEpsilon(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class EmptyVector(ValidationError):
    pass


class EmptyMatrix(ValidationError):
    pass


class ColumnCountMismatch(ValidationError):
    pass


class ShapeMismatch(ValidationError):
    pass


class EmptyBatch(ValidationError):
    pass


class BatchLargerThanData(ValidationError):
    pass


class TraceTooShort(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class ParseError(ValidationError):
    """Malformed CSV/JSON input; carries the 1-based line and column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class RaggedRows(ParseError):
    pass


class NumericFailure(OTError, ArithmeticError):
    """Iteration produced values that cannot be represented."""


class NumericOverflow(NumericFailure):
    pass


class KernelDegenerate(NumericOverflow):
    """A kernel product ``Kv`` or ``K^T u`` has an exact zero entry."""
