"""Exception types shared across the package."""


class DrcError(Exception):
    """Base class for all package errors."""


class SceneParseError(DrcError):
    """Scene document is not syntactically valid (position reported)."""


class SceneValidationError(DrcError):
    """Scene document parsed but violates a semantic rule."""


class FormatError(DrcError):
    """Binary container (weights, dataset, cache dump) is malformed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(DrcError):
    """Invalid render/training configuration."""


class ContractError(DrcError):
    """An operation was called outside its contract."""
