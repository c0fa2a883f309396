"""Exception hierarchy shared by every subpackage."""

from typing import Optional


class MCSTError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MCSTError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(MCSTError, RuntimeError):
    """A precondition of an operation was violated."""


class ConfigError(MCSTError, ValueError):
    """A configuration value or command-line argument is invalid."""


class EmbeddingIndexError(MCSTError, IndexError):
    """A lookup index falls outside its table."""


class NonFiniteError(MCSTError, ArithmeticError):
    """An operation produced NaN or Inf from finite inputs."""


class FormatError(MCSTError, ValueError):
    """A binary file does not follow its declared layout."""

    def __init__(self, message: str, offset: Optional[int] = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class DataError(MCSTError, ValueError):
    """Dataset values violate a channel invariant."""

    def __init__(self, message: str, channel: Optional[str] = None, index: Optional[tuple] = None):
        self.channel = channel
        self.index = index
        super().__init__(message)


class DivergenceError(MCSTError, RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, epoch: int, step: int):
        self.epoch = epoch
        self.step = step
        super().__init__(f"{message} (epoch {epoch}, step {step})")


class CheckFailure(MCSTError):
    """A verification command found a violation."""
