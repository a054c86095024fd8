class ConfigurationError(ValueError):
    """Invalid architecture, shape or hyperparameter."""


class TrainingFault(RuntimeError):
    """Raised when the loss stops being finite."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ConsistencyError(RuntimeError):
    """A quantized weight is not on its layer's level set."""


class DecodeError(ValueError):
    """Malformed, truncated or corrupted artifact."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at byte {position})"
        super().__init__(message)
        self.position = position
