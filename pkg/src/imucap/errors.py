"""Exception types shared across the package."""


class ImucapError(Exception):
    """Base class for all package errors."""


class DegenerateInput(ImucapError, ValueError):
    pass


class DimensionMismatch(ImucapError, ValueError):
    pass


class LengthMismatch(DimensionMismatch):
    pass


class EmptyInput(ImucapError, ValueError):
    pass


class SequenceTooShort(ImucapError, ValueError):
    pass


class SpecMismatch(ImucapError, ValueError):
    pass


class BadThresholds(ImucapError, ValueError):
    pass


class UntrainedNetwork(ImucapError, RuntimeError):
    pass


class NonFiniteLoss(ImucapError, ArithmeticError):
    """Training produced a NaN/inf loss; carries the epoch and batch index."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class FormatError(ImucapError, ValueError):
    """A data file did not match the expected layout."""
