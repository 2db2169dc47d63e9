"""Exception types shared across the package."""


class VoxtendError(Exception):
    """Base class for package-specific failures."""


class FormatError(VoxtendError):
    """A file or byte stream does not match its declared format."""


class ConfigError(VoxtendError):
    """Invalid or inconsistent run configuration."""


class TrainingDivergence(VoxtendError):
    """Training loss became non-finite."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss!r})")
        self.step = step
        self.loss = loss


class ShortUtteranceError(VoxtendError):
    """An utterance has fewer frames than the requested clip."""


class DegenerateEmbeddingError(VoxtendError):
    """The pooled projection collapsed to the zero vector."""


class UtteranceFailure(VoxtendError):
    """A per-utterance step failed inside a protocol condition."""

    def __init__(self, utterance_id: str, condition: str, cause: Exception):
        super().__init__(
            f"utterance '{utterance_id}' failed in condition '{condition}': {cause}"
        )
        self.utterance_id = utterance_id
        self.condition = condition
