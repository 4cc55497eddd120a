"""Exception hierarchy shared by every module."""


class XaiCompressError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class InvalidArgumentError(XaiCompressError, ValueError):
    exit_code = 2


class NumericError(XaiCompressError, ArithmeticError):
    exit_code = 3

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"{message} (epoch {epoch})"
        super().__init__(message)
        self.epoch = epoch


class DegenerateLayerError(XaiCompressError, ValueError):
    """Every neuron of a hidden layer would be removed."""

    exit_code = 4

    def __init__(self, layer):
        super().__init__(f"hidden layer {layer} has no surviving neurons")
        self.layer = layer


class FormatError(XaiCompressError, ValueError):
    exit_code = 5


class BadMagicError(FormatError):
    pass


class VersionMismatchError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class CodeRangeError(FormatError):
    pass


class InvalidFieldError(FormatError):
    """Header or array field violates a model invariant."""
