"""Exception types raised across the pipeline.

Every domain failure derives from :class:`StrokesigError` so callers (and
the CLI) can distinguish "your data/arguments are bad" from programming
errors. Individual classes are deliberately thin; the message carries the
detail.
"""


class StrokesigError(Exception):
    """Base class for all domain errors raised by this package."""


# --- cohort files / resampling -------------------------------------------

class MalformedFile(StrokesigError):
    """Cohort file has a bad magic, truncated body, or undecodable field."""


class VersionMismatch(StrokesigError):
    """File declares a format version this build does not read."""


class MissingChannel(StrokesigError):
    """A required channel name is absent from a recording."""


class DuplicateSubject(StrokesigError):
    """Two recordings in one cohort share a subject id."""


class IoFailure(StrokesigError):
    """Underlying OS-level read/write failed."""


class NonIntegerFactor(StrokesigError):
    """Downsampling requested with a non-integer rate ratio."""


class EmptyInput(StrokesigError):
    """An operation received a zero-length signal."""


# --- feature extraction ----------------------------------------------------

class SegmentTooLong(StrokesigError):
    """PSD segment length exceeds the signal length."""


class InvalidSegmentLength(StrokesigError):
    """PSD segment length must be a power of two >= 2."""


class InsufficientBandCoverage(StrokesigError):
    """PSD does not span the frequency range a feature needs."""


class ZeroTotalPower(StrokesigError):
    """All bands are empty of power; relative powers are undefined."""


class TooShort(StrokesigError):
    """Signal has too few samples for the requested statistic."""


class ConstantInput(StrokesigError):
    """Statistic undefined for a constant signal."""


class LengthMismatch(StrokesigError):
    """Paired signals differ in length."""


class ZeroBandPower(StrokesigError):
    """Requested band contains no power; normalization impossible."""


class NonPositivePower(StrokesigError):
    """Log-log spectral fit requires strictly positive power in range."""


class TooFewBins(StrokesigError):
    """Frequency range covers too few PSD bins for the operation."""


class PairCountMismatch(StrokesigError):
    """Left/right PSD lists have different lengths."""


class BandNotCovered(StrokesigError):
    """A PSD does not cover the 1-25 Hz symmetry band."""


class GridMismatch(StrokesigError):
    """Left/right PSDs disagree on the frequency grid inside the band."""


class DegenerateBin(StrokesigError):
    """Left+right power is zero at a bin used by the symmetry index."""


class FeatureError(StrokesigError):
    """A sub-operation failed while building the 24-feature vector.

    Carries the feature label (e.g. ``"f24"``) so the caller knows which
    entry could not be computed.
    """

    def __init__(self, feature: str, cause: Exception):
        super().__init__(f"{feature}: {cause}")
        self.feature = feature
        self.cause = cause


# --- neural network ---------------------------------------------------------

class ShapeMismatch(StrokesigError):
    """Layer input shape does not compose with the layer's parameters."""


class OddLength(StrokesigError):
    """Subsampling requires an even input length."""


class BatchTooSmall(StrokesigError):
    """Batch normalization in training mode needs at least 2 examples."""


class UninitializedStats(StrokesigError):
    """Batch-norm running statistics are unusable (non-finite)."""


class NonFiniteLoss(StrokesigError):
    """Training diverged: loss or activations left the finite range."""


class MalformedModelFile(StrokesigError):
    """Model file is truncated or fails to parse."""


# --- baselines ---------------------------------------------------------------

class MissingClass(StrokesigError):
    """Training data does not contain every class label."""


class EmptyModel(StrokesigError):
    """kNN model holds no training vectors."""


class NonConvergence(StrokesigError):
    """Optimizer hit its iteration cap before reaching tolerance."""

    def __init__(self, message: str, gradient_norm: float):
        super().__init__(message)
        self.gradient_norm = gradient_norm


# --- evaluation --------------------------------------------------------------

class TooFewExamples(StrokesigError):
    """Leave-one-out needs at least 2 examples."""


class RoundFailure(StrokesigError):
    """A classifier failed inside the harness; carries (repetition, round)."""

    def __init__(self, repetition: int, round_index: int, cause: Exception):
        super().__init__(f"repetition {repetition}, round {round_index}: {cause}")
        self.repetition = repetition
        self.round_index = round_index
        self.cause = cause


class EmptyMatrix(StrokesigError):
    """Confusion matrix holds no observations."""


class EmptyReport(StrokesigError):
    """Report rendering requires at least one repetition."""
