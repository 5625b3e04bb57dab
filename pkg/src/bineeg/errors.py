"""Exception types shared across the package."""


class BineegError(Exception):
    """Base class for all package errors."""


class InvalidShape(BineegError):
    """A tensor shape is malformed (zero or negative dimension)."""


class InvalidValue(BineegError):
    """A value is outside its operation's domain (NaN, non-binary input, ...)."""


class ShapeMismatch(BineegError):
    """Operand shapes are incompatible."""


class InvalidConfig(BineegError):
    """A model or generator configuration cannot be realized."""


class CorruptModel(BineegError):
    """A model file failed validation (bad magic, version, or truncation)."""


class CorruptInput(BineegError):
    """A recording file failed validation."""


class InvalidAnnotations(BineegError):
    """Seizure annotations are unordered, overlapping, or out of bounds."""


class InvalidDataset(BineegError):
    """A dataset does not satisfy an operation's preconditions."""


class TrainingDiverged(BineegError):
    """Loss became non-finite during training."""

    def __init__(self, epoch, batch, loss):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
