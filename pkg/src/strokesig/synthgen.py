"""Synthetic stroke/normal cohorts with the qualitative EEG signatures.

A subject's spectral recipe combines: relative band-power targets that
morph from alpha-dominant (normal) toward delta/theta dominance as
cerebral-blood-flow severity grows; a one-over-f background that steepens
with severity; a right-hemisphere gain calibrated so the C3/C4 symmetry
index lands on 0.044 + 0.0077 * (severity * 20), the clinical
index-vs-score relation with severity * 20 standing in for the
severity score; and an eye-channel correlation that drops with severity.

Channels are rendered by inverse-FFT shaping of random-phase spectra, so
the spectral content is exact in expectation and every sample is a pure
function of the subject seed.

Within-class variability is what makes the cohort a nontrivial
classification task: band targets, background exponent and EOG
correlation all carry per-subject jitter, and a fraction of normals get
a mild drowsiness-like slowing of their band profile (severity stays 0;
their eye correlation and background keep healthy statistics). Without
that overlap every classifier saturates and comparisons degenerate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal_io import Channel, Cohort, CohortMeta, Label, Recording

#: canonical band-target endpoints (delta, theta, alpha, beta)
NORMAL_BAND_TARGETS = np.array([0.10, 0.20, 0.45, 0.25])
SEVERE_BAND_TARGETS = np.array([0.45, 0.35, 0.15, 0.05])

#: band edges matching the feature extractor
_BAND_EDGES = ((0.5, 4.0), (4.0, 8.0), (8.0, 13.0), (13.0, 20.0))

#: fraction of total EEG power put into the one-over-f background
BACKGROUND_FRAC = 0.15

#: symmetry-index-vs-severity calibration line
BSI_INTERCEPT = 0.044
BSI_SLOPE_PER_SCORE = 0.0077
SEVERITY_TO_SCORE = 20.0
BSI_CLIP = 0.6

#: per-subject variability
BAND_JITTER_SD = 0.08
BAND_JITTER_CLIP = 0.15
EXPONENT_JITTER_SD = 0.35
EOG_CORR_JITTER_SD = 0.12
DROWSY_NORMAL_PROB = 0.40
DROWSY_SLOWING_MIN = 0.08
DROWSY_SLOWING_MAX = 0.45

#: healthy eye-channel correlation and its decline with severity
EOG_CORR_NORMAL = 0.82
EOG_CORR_DROP = 0.25


@dataclass(frozen=True)
class SubjectSpec:
    label: Label
    cbf_severity: float
    asymmetry: float
    seed: int
    duration_s: float = 900.0
    rate_hz: float = 64.0

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if not 0.0 <= self.cbf_severity <= 1.0:
            raise ValueError(f"cbf_severity must be in [0, 1], got {self.cbf_severity}")
        if not 0.0 <= self.asymmetry <= 1.0:
            raise ValueError(f"asymmetry must be in [0, 1], got {self.asymmetry}")
        if self.label == Label.NORMAL and self.cbf_severity != 0.0:
            raise ValueError("normal subjects must have cbf_severity == 0")
        if self.label == Label.STROKE and self.cbf_severity <= 0.0:
            raise ValueError("stroke subjects must have cbf_severity > 0")
        if self.duration_s <= 0 or self.rate_hz <= 0:
            raise ValueError("duration_s and rate_hz must be positive")


@dataclass(frozen=True)
class SpectralRecipe:
    band_targets: np.ndarray          # (4,) nonnegative, sums to 1
    one_over_f_exponent: float
    right_gain: float                 # amplitude gain of right-hemisphere channels
    eog_correlation: float
    eeg_scale: float                  # target channel standard deviation
    eog_scale: float

    def __post_init__(self):
        t = np.asarray(self.band_targets, dtype=np.float64)
        object.__setattr__(self, "band_targets", t)
        if t.shape != (4,) or np.any(t < 0) or abs(t.sum() - 1.0) > 1e-9:
            raise ValueError("band_targets must be 4 nonnegative values summing to 1")


def severity_band_targets(severity: float) -> np.ndarray:
    """Canonical linear morph from the normal to the severe band profile."""
    s = float(np.clip(severity, 0.0, 1.0))
    return (1.0 - s) * NORMAL_BAND_TARGETS + s * SEVERE_BAND_TARGETS


def target_symmetry_index(severity: float, asymmetry: float) -> float:
    """Severity-calibrated symmetry target, modulated by subject asymmetry."""
    base = BSI_INTERCEPT + BSI_SLOPE_PER_SCORE * SEVERITY_TO_SCORE * severity
    return float(np.clip(base * (0.6 + 0.4 * asymmetry), 0.0, BSI_CLIP))


def _jittered_targets(targets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    delta = rng.normal(0.0, BAND_JITTER_SD, size=4)
    delta -= delta.mean()
    delta = np.clip(delta, -BAND_JITTER_CLIP, BAND_JITTER_CLIP)
    jittered = np.clip(targets + delta, 0.02, None)
    return jittered / jittered.sum()


def make_recipe(spec: SubjectSpec) -> SpectralRecipe:
    """Deterministic subject recipe: severity trends plus seeded variation."""
    rng = np.random.default_rng([spec.seed, 0x5EC1])
    severity = spec.cbf_severity

    base = severity_band_targets(severity)
    drowsy_draw = rng.random()
    if spec.label == Label.NORMAL and drowsy_draw < DROWSY_NORMAL_PROB:
        # drowsy healthy subtype: band profile slows, everything else healthy
        base = severity_band_targets(rng.uniform(DROWSY_SLOWING_MIN, DROWSY_SLOWING_MAX))
    targets = _jittered_targets(base, rng)

    exponent = 1.0 + 0.55 * severity + rng.normal(0.0, EXPONENT_JITTER_SD)
    exponent = float(np.clip(exponent, 0.3, 2.5))

    bsi_target = target_symmetry_index(severity, spec.asymmetry)
    right_gain = float(np.sqrt((1.0 + bsi_target) / (1.0 - bsi_target)))

    corr = EOG_CORR_NORMAL - EOG_CORR_DROP * severity + rng.normal(0.0, EOG_CORR_JITTER_SD)
    corr = float(np.clip(corr, 0.05, 0.97))

    eeg_scale = float(18.0 * np.exp(rng.normal(0.0, 0.15)))
    eog_scale = float(55.0 * np.exp(rng.normal(0.0, 0.20)))
    return SpectralRecipe(targets, exponent, right_gain, corr, eeg_scale, eog_scale)


# --- spectrum rendering -----------------------------------------------------------


def _shaped_noise(rng: np.random.Generator, psd: np.ndarray, n: int) -> np.ndarray:
    """Unit-variance real signal whose spectrum magnitude follows sqrt(psd)."""
    phases = rng.uniform(0.0, 2.0 * np.pi, size=psd.size)
    spectrum = np.sqrt(psd) * np.exp(1j * phases)
    spectrum[0] = 0.0
    if n % 2 == 0:
        spectrum[-1] = spectrum[-1].real
    x = np.fft.irfft(spectrum, n)
    sd = x.std()
    return x / sd if sd > 0 else x


def _eeg_psd_shape(freqs: np.ndarray, recipe: SpectralRecipe) -> np.ndarray:
    background = np.zeros_like(freqs)
    in_bg = (freqs >= 0.5) & (freqs < 32.0)
    background[in_bg] = freqs[in_bg] ** (-recipe.one_over_f_exponent)
    bg_total = background.sum()
    background *= (BACKGROUND_FRAC / (1.0 - BACKGROUND_FRAC)) / bg_total

    psd = background.copy()
    band_bg = np.empty(4)
    masks = []
    for i, (lo, hi) in enumerate(_BAND_EDGES):
        mask = (freqs >= lo) & ((freqs <= hi) if i == 3 else (freqs < hi))
        masks.append(mask)
        band_bg[i] = background[mask].sum()
    # scale the in-band total so every box stays nonnegative after the
    # background's contribution is credited against its band target
    total = max(1.0, 1.02 * float(np.max(band_bg / recipe.band_targets)))
    for i, mask in enumerate(masks):
        box = recipe.band_targets[i] * total - band_bg[i]
        psd[mask] += box / mask.sum()
    return psd


def _eog_psd_shape(freqs: np.ndarray) -> np.ndarray:
    """Fixed drift-plus-broadband mixture shared by every EOG component.

    Both the correlated and the independent parts of LEOG/REOG use this
    same shape, so the composite spectrum (and the EOG band features) do
    not depend on the correlation; only the correlation feature does.
    """
    drift = np.zeros_like(freqs)
    mask = (freqs >= 0.08) & (freqs < 1.0)
    drift[mask] = np.maximum(freqs[mask], 0.1) ** -1.5
    if drift.sum() > 0:
        drift /= drift.sum()
    broadband = np.zeros_like(freqs)
    bb = (freqs >= 0.5) & (freqs < 30.0)
    broadband[bb] = 1.0
    broadband /= broadband.sum()
    return 0.6 * drift + 0.4 * broadband


def synth_recording(spec: SubjectSpec) -> Recording:
    """Render C3, C4, OZ, LEOG, REOG time series for one subject."""
    recipe = make_recipe(spec)
    rng = np.random.default_rng([spec.seed, 0x51C7])
    n = int(round(spec.duration_s * spec.rate_hz))
    freqs = np.fft.rfftfreq(n, 1.0 / spec.rate_hz)

    eeg_psd = _eeg_psd_shape(freqs, recipe)
    c3 = _shaped_noise(rng, eeg_psd, n) * recipe.eeg_scale
    c4 = _shaped_noise(rng, eeg_psd, n) * recipe.eeg_scale * recipe.right_gain
    oz = _shaped_noise(rng, eeg_psd, n) * recipe.eeg_scale

    eog_psd = _eog_psd_shape(freqs)
    shared_part = _shaped_noise(rng, eog_psd, n)
    indep_l = _shaped_noise(rng, eog_psd, n)
    indep_r = _shaped_noise(rng, eog_psd, n)
    shared = np.sqrt(recipe.eog_correlation)
    indep = np.sqrt(1.0 - recipe.eog_correlation)
    leog = (shared * shared_part + indep * indep_l) * recipe.eog_scale
    reog = (shared * shared_part + indep * indep_r) * recipe.eog_scale

    rate = spec.rate_hz
    subject_id = f"{'normal' if spec.label == Label.NORMAL else 'stroke'}-{spec.seed & 0xFFFFFFFF:08x}"
    return Recording(
        subject_id=subject_id,
        label=spec.label,
        channels=(
            Channel("C3", c3, rate),
            Channel("C4", c4, rate),
            Channel("OZ", oz, rate),
            Channel("LEOG", leog, rate),
            Channel("REOG", reog, rate),
        ),
    )


# --- cohorts ---------------------------------------------------------------------------


def synth_cohort(
    n_normal: int,
    n_stroke: int,
    master_seed: int = 7,
    severity_range: tuple[float, float] = (0.2, 1.0),
    duration_s: float = 900.0,
    rate_hz: float = 64.0,
) -> Cohort:
    """Seeded cohort of ``n_normal`` healthy and ``n_stroke`` stroke subjects.

    Stroke severities are uniform over ``severity_range``; when the range
    reaches into the early-stage window (below 0.2, the analog of a
    clinical score of at most 4), a 15% share of strokes is forced into
    that window so the hard cases are always represented.
    """
    lo, hi = severity_range
    if not (0.0 <= lo <= hi <= 1.0):
        raise ValueError(f"severity_range must satisfy 0 <= lo <= hi <= 1, got {severity_range}")
    if n_normal < 0 or n_stroke < 0:
        raise ValueError("subject counts must be nonnegative")

    rng = np.random.default_rng([master_seed, 0xC04057])
    recordings: list[Recording] = []

    def build(index: int, label: Label, severity: float, prefix: str) -> Recording:
        spec = SubjectSpec(
            label=label,
            cbf_severity=severity,
            asymmetry=float(rng.random()),
            seed=int(rng.integers(1 << 62)),
            duration_s=duration_s,
            rate_hz=rate_hz,
        )
        rec = synth_recording(spec)
        return Recording(f"{prefix}-{index:02d}", rec.label, rec.channels)

    for i in range(n_normal):
        recordings.append(build(i + 1, Label.NORMAL, 0.0, "normal"))

    severities = lo + (hi - lo) * rng.random(n_stroke)
    early_hi = min(hi, 0.2)
    if early_hi > lo and n_stroke > 0:
        n_early = max(1, round(0.15 * n_stroke))
        severities[:n_early] = lo + (early_hi - lo) * rng.random(n_early)
    severities = np.maximum(severities, 1e-6)  # stroke severity must be > 0
    for i in range(n_stroke):
        recordings.append(build(i + 1, Label.STROKE, float(severities[i]), "stroke"))

    meta = CohortMeta(
        source=f"synthetic cohort (seed {master_seed}, severity {lo:g}..{hi:g})",
        working_rate_hz=rate_hz,
    )
    return Cohort(tuple(recordings), meta)
