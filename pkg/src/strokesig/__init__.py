"""EEG/EOG stroke-vs-normal classification pipeline."""

__version__ = "0.1.0"

from .signal_io import Channel, Cohort, CohortMeta, Label, Recording  # noqa: F401
from .features import FeatureVector, Psd, extract_features  # noqa: F401
