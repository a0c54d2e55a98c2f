"""Exception types shared across the library.

The CLI maps these onto process exit codes: parameter/config problems exit
with 2, I/O and file-format problems with 3, invariant violations with 4.
"""


class LlrawError(Exception):
    """Base class for all llraw errors."""


class DimensionError(LlrawError):
    """Tensor shapes are inconsistent; the message names the offending axis."""


class ParameterError(LlrawError):
    """A parameter value is outside its documented domain."""


class DomainError(LlrawError):
    """Input values are outside the operation's value domain (e.g. [0, 1])."""


class NumericError(LlrawError):
    """A computation produced non-finite values from finite inputs."""


class DataError(LlrawError):
    """Dataset-level problem: empty stream, label out of range, misaligned pair."""


class UsageError(LlrawError):
    """API misuse, e.g. a backward call with a cache that does not match dY."""


class FormatError(LlrawError):
    """A file does not conform to its declared on-disk format."""
