"""Typed errors raised by loaders, analyses, and the probe trainer."""


class ImblensError(Exception):
    """Base class for all library errors."""


class MissingManifestError(ImblensError):
    """Directory does not contain a manifest.json."""


class MalformedManifestError(ImblensError):
    """Manifest exists but violates the EMBX schema."""


class ShapeMismatchError(ImblensError):
    """Declared tensor shape does not match the file's byte length."""


class NegativeFEError(ImblensError):
    """Feature embeddings contain negative entries (expected post-threshold)."""


class LabelOutOfRangeError(ImblensError):
    """A label is negative or >= num_classes."""


class NonFinitePayloadError(ImblensError):
    """A float tensor contains NaN or Inf."""


class IoFailureError(ImblensError):
    """Filesystem write failed."""


class DimensionMismatchError(ImblensError):
    """Paired inputs disagree on H or C."""


class EmptyInputError(ImblensError):
    """Operation received zero instances."""


class TrainingDivergedError(ImblensError):
    """Loss became non-finite during retraining.

    Carries the partial trace up to the failing epoch in `.trace`.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace
