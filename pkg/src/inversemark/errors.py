"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class InversemarkError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InvalidArgumentError(InversemarkError):
    """A caller-supplied value violates a documented precondition."""

    exit_code = 1


class NumericFailureError(InversemarkError):
    """A numeric routine produced non-finite values or failed to converge."""

    exit_code = 2


class DegenerateInputError(NumericFailureError):
    """Input data is degenerate for the requested statistic (e.g. zero variance)."""


class IoError(InversemarkError):
    """A filesystem or network operation failed."""

    exit_code = 3
