"""Library-wide exception types."""


class EarlycastError(Exception):
    """Base class for library errors."""


class DataFormatError(EarlycastError):
    """Malformed trial files or inconsistent dataset contents."""


class KinematicsError(EarlycastError):
    """Synthetic trial generation could not satisfy its constraints."""


class TrainingDivergedError(EarlycastError):
    """Training produced a non-finite loss."""

    def __init__(self, model: str, epoch: int, loss: float):
        super().__init__(f"{model}: non-finite loss {loss!r} at epoch {epoch}")
        self.model = model
        self.epoch = epoch
        self.loss = loss
