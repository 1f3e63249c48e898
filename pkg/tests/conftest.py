import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from strokesig import features as feat
from strokesig import synthgen
from strokesig.signal_io import Channel, Label, Recording


def make_recording(subject_id="s1", label=Label.NORMAL, rate=64.0, n=57600,
                   c3=None, oz=None, leog=None, reog=None, extra=()):
    """Recording with required channels; unspecified ones get seeded noise."""
    rng = np.random.default_rng(abs(hash(subject_id)) % (2**32))
    def fill(x):
        return rng.standard_normal(n) if x is None else np.asarray(x, dtype=np.float64)
    channels = [
        Channel("C3", fill(c3), rate),
        Channel("OZ", fill(oz), rate),
        Channel("LEOG", fill(leog), rate),
        Channel("REOG", fill(reog), rate),
        *extra,
    ]
    return Recording(subject_id, label, tuple(channels))


@pytest.fixture(scope="session")
def default_cohort():
    """The 30/32 cohort every desk-scale check runs on (master seed 7)."""
    return synthgen.synth_cohort(30, 32, master_seed=7, severity_range=(0.2, 1.0))


@pytest.fixture(scope="session")
def default_features(default_cohort):
    vectors = [feat.extract_features(rec) for rec in default_cohort.recordings]
    x = np.stack([v.values for v in vectors])
    y = np.array([int(v.label) for v in vectors], dtype=np.int64)
    return x, y, vectors
