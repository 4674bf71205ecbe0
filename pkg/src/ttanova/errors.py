"""Exception types raised by the library.

Errors split in two families: :class:`UsageError` for bad input or
configuration, and :class:`NumericalError` for failures of the numerical
pipeline itself. The CLI maps them to distinct exit codes.
"""


class TtAnovaError(Exception):
    """Base class of every error raised by ttanova."""


class UsageError(TtAnovaError):
    pass


class NumericalError(TtAnovaError):
    pass


class ConfigurationError(UsageError):
    pass


class ExprSyntaxError(UsageError):
    """Malformed expression text.

    ``line`` and ``column`` are 1-based and point at the offending token
    (or one past the end of input).
    """

    def __init__(self, message, line, column, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        loc = f"line {line}, column {column}"
        if expected:
            message = f"{message} (expected {expected})"
        super().__init__(f"{loc}: {message}")


class UnknownSymbol(UsageError):
    def __init__(self, name, line=1, column=1):
        self.name = name
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: unknown symbol {name!r}")


class SizeOverflow(NumericalError):
    pass


class InvalidRecurrence(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class DegenerateOutput(NumericalError):
    pass


class NumericError(NumericalError):
    """A model evaluation produced a non-finite or undefined value."""


class MaxvolStall(NumericalError):
    pass


class MaxRankExceeded(NumericalError):
    pass


class MomentUnavailable(NumericalError):
    pass


class MomentIndefinite(NumericalError):
    pass
