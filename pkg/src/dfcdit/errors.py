"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage/config/task problems -> 1,
I/O and format problems -> 2, numeric failures -> 3.
"""


class DfcError(Exception):
    """Base class for all library errors."""


class ShapeError(DfcError, ValueError):
    """Tensor shapes are incompatible with an operator."""


class ConfigError(DfcError, ValueError):
    """Unknown configuration key or out-of-range value."""


class TaskMismatchError(DfcError, ValueError):
    """A network was used for a task it was not built for."""


class FormatError(DfcError):
    """Malformed, truncated or unsupported file content."""


class ArchiveError(FormatError):
    """Weight archive does not match its declared architecture."""


class NumericError(DfcError, ArithmeticError):
    """A loss or gradient became NaN or infinite."""
