"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A model or environment was configured inconsistently (e.g. shape mismatch)."""


class InputError(ValueError):
    """An input value is outside its documented range (e.g. unknown token id)."""


class GenerationError(RuntimeError):
    """Scene or game sampling constraints could not be satisfied."""


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite loss; carries (epoch, batch, loss) diagnostics."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")
