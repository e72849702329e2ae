"""Exception types raised across the package."""


class NegToMeError(Exception):
    """Base class for all errors raised by negtome."""


class DimensionError(NegToMeError, ValueError):
    """Tensor shapes are incompatible."""


class ConfigurationError(NegToMeError, ValueError):
    """A parameter or run configuration is invalid."""


class InputError(NegToMeError, ValueError):
    """Metric inputs are empty or degenerate."""


class FormatError(NegToMeError, ValueError):
    """A tensor file is malformed.

    ``offset`` is the byte position where parsing failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset
