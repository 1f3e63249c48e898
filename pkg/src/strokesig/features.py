"""Spectral/statistical features and the brain symmetry index.

Produces the 24-value handcrafted vector per recording: relative band
powers for C3, the EOG composite and OZ over delta/theta/alpha/beta,
the EOG standard deviation and left/right EOG correlation, kurtosis,
spectral entropy and spectral mean per channel, and the C3 fractal
exponent (negative log-log PSD slope).

The symmetry index compares left/right hemispheric power over 1-25 Hz
as the mean over channel pairs of |mean over bins of (R-L)/(R+L)|:
zero for perfectly symmetric spectra, with ~0.042 the conventional
healthy ceiling.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BandNotCovered,
    ConstantInput,
    DegenerateBin,
    EmptyInput,
    FeatureError,
    GridMismatch,
    InsufficientBandCoverage,
    InvalidSegmentLength,
    LengthMismatch,
    NonPositivePower,
    PairCountMismatch,
    SegmentTooLong,
    StrokesigError,
    TooFewBins,
    TooShort,
    ZeroBandPower,
    ZeroTotalPower,
)
from .signal_io import Label, Recording

#: default Welch configuration: 4 s segments at the 64 Hz working rate
#: give 0.25 Hz resolution, enough to resolve the 0.5 Hz delta edge.
DEFAULT_SEGMENT_LEN = 256
DEFAULT_OVERLAP = 0.5

#: frequency ranges (Hz) for the entropy/spectral-mean and fractal features
WIDEBAND_HZ = (0.5, 32.0)
FRACTAL_HZ = (0.5, 20.0)

#: symmetry index integration band (Hz)
SYMMETRY_BAND_HZ = (1.0, 25.0)

FEATURE_NAMES = tuple(f"f{i:02d}" for i in range(1, 25))


@dataclass(frozen=True)
class BandDef:
    name: str
    lo_hz: float
    hi_hz: float
    #: closed upper edge (used for the last band so 20 Hz is included)
    hi_inclusive: bool = False

    def mask(self, freqs: np.ndarray) -> np.ndarray:
        if self.hi_inclusive:
            return (freqs >= self.lo_hz) & (freqs <= self.hi_hz)
        return (freqs >= self.lo_hz) & (freqs < self.hi_hz)


BANDS = (
    BandDef("delta", 0.5, 4.0),
    BandDef("theta", 4.0, 8.0),
    BandDef("alpha", 8.0, 13.0),
    BandDef("beta", 13.0, 20.0, hi_inclusive=True),
)


@dataclass(frozen=True)
class Psd:
    """One-sided power spectral density on a uniform frequency grid."""

    freqs_hz: np.ndarray
    power: np.ndarray
    resolution_hz: float

    def __post_init__(self):
        object.__setattr__(self, "freqs_hz", np.asarray(self.freqs_hz, dtype=np.float64))
        object.__setattr__(self, "power", np.asarray(self.power, dtype=np.float64))
        if self.freqs_hz.shape != self.power.shape:
            raise ValueError("freqs and power must have the same length")

    def band_mask(self, lo_hz: float, hi_hz: float) -> np.ndarray:
        return (self.freqs_hz >= lo_hz) & (self.freqs_hz <= hi_hz)

    def covers(self, lo_hz: float, hi_hz: float) -> bool:
        return self.freqs_hz[0] <= lo_hz and self.freqs_hz[-1] >= hi_hz


@dataclass(frozen=True)
class BsiResult:
    value: float
    n_freq_bins: int
    n_pairs: int


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    subject_id: str
    label: Label

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.shape != (24,):
            raise ValueError(f"expected 24 features, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = [FEATURE_NAMES[i] for i in np.flatnonzero(~np.isfinite(values))]
            raise ValueError(f"non-finite feature values: {', '.join(bad)}")


# --- PSD estimation -----------------------------------------------------------


def welch_psd(
    samples: Sequence[float],
    rate_hz: float,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    overlap_frac: float = DEFAULT_OVERLAP,
) -> Psd:
    """Welch estimate: Hamming-windowed, mean-detrended, overlapping segments.

    Density scaling (power per Hz), one-sided with the usual doubling of
    interior bins, so ``sum(power) * resolution`` recovers the signal
    variance for stationary input. Each segment has its mean removed
    before windowing; a constant signal therefore yields an all-zero PSD.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("cannot estimate a PSD from an empty signal")
    if segment_len < 2 or segment_len & (segment_len - 1):
        raise InvalidSegmentLength(f"segment_len must be a power of two >= 2, got {segment_len}")
    if segment_len > x.size:
        raise SegmentTooLong(f"segment_len {segment_len} exceeds signal length {x.size}")
    if not 0.0 <= overlap_frac < 1.0:
        raise ValueError(f"overlap_frac must be in [0, 1), got {overlap_frac}")

    window = np.hamming(segment_len)
    scale = 1.0 / (rate_hz * np.sum(window**2))
    hop = segment_len - int(overlap_frac * segment_len)
    starts = range(0, x.size - segment_len + 1, hop)

    acc = np.zeros(segment_len // 2 + 1)
    for s in starts:
        seg = x[s : s + segment_len]
        seg = seg - seg.mean()
        spectrum = np.fft.rfft(seg * window)
        periodogram = (spectrum.real**2 + spectrum.imag**2) * scale
        periodogram[1:-1] *= 2.0
        acc += periodogram
    power = acc / len(starts)

    resolution = rate_hz / segment_len
    freqs = np.arange(segment_len // 2 + 1) * resolution
    return Psd(freqs, power, resolution)


def relative_band_powers(psd: Psd, bands: Sequence[BandDef] = BANDS) -> np.ndarray:
    """Per-band power divided by the summed power of all given bands."""
    lo = min(b.lo_hz for b in bands)
    hi = max(b.hi_hz for b in bands)
    if not psd.covers(lo, hi):
        raise InsufficientBandCoverage(
            f"PSD spans [{psd.freqs_hz[0]:g}, {psd.freqs_hz[-1]:g}] Hz, "
            f"need [{lo:g}, {hi:g}] Hz"
        )
    band_powers = np.array([psd.power[b.mask(psd.freqs_hz)].sum() for b in bands])
    total = band_powers.sum()
    if total <= 0.0:
        raise ZeroTotalPower("no power in any of the requested bands")
    return band_powers / total


# --- scalar statistics --------------------------------------------------------


def signal_stddev(samples: Sequence[float]) -> float:
    """Population standard deviation."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 2:
        raise TooShort(f"need at least 2 samples, got {x.size}")
    return float(np.std(x))


def pearson_correlation(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size < 2:
        raise TooShort(f"need at least 2 samples, got {a.size}")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        raise ConstantInput("correlation undefined for a constant signal")
    r = float(np.sum(da * db) / denom)
    return min(1.0, max(-1.0, r))


def kurtosis(samples: Sequence[float]) -> float:
    """Pearson (non-excess) kurtosis m4 / m2**2; 3 for a Gaussian."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size < 4:
        raise TooShort(f"need at least 4 samples, got {x.size}")
    d = x - x.mean()
    m2 = np.mean(d * d)
    if m2 == 0.0:
        raise ConstantInput("kurtosis undefined for a constant signal")
    return float(np.mean(d**4) / m2**2)


# --- band-restricted spectral statistics ---------------------------------------


def _band_bins(psd: Psd, lo_hz: float, hi_hz: float, min_bins: int) -> np.ndarray:
    if not psd.covers(lo_hz, hi_hz):
        raise BandNotCovered(
            f"PSD spans [{psd.freqs_hz[0]:g}, {psd.freqs_hz[-1]:g}] Hz, "
            f"need [{lo_hz:g}, {hi_hz:g}] Hz"
        )
    idx = np.flatnonzero(psd.band_mask(lo_hz, hi_hz))
    if idx.size < min_bins:
        raise TooFewBins(f"[{lo_hz:g}, {hi_hz:g}] Hz covers {idx.size} bins, need {min_bins}")
    return idx


def spectral_entropy(psd: Psd, lo_hz: float, hi_hz: float) -> float:
    """Shannon entropy (nats) of the PSD normalized over [lo, hi]."""
    idx = _band_bins(psd, lo_hz, hi_hz, min_bins=2)
    p = psd.power[idx]
    total = p.sum()
    if total <= 0.0:
        raise ZeroBandPower(f"no power in [{lo_hz:g}, {hi_hz:g}] Hz")
    p = p / total
    nz = p[p > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def spectral_mean(psd: Psd, lo_hz: float, hi_hz: float) -> float:
    """Power-weighted mean frequency (spectral centroid) over [lo, hi], Hz."""
    idx = _band_bins(psd, lo_hz, hi_hz, min_bins=2)
    p = psd.power[idx]
    total = p.sum()
    if total <= 0.0:
        raise ZeroBandPower(f"no power in [{lo_hz:g}, {hi_hz:g}] Hz")
    return float(np.sum(psd.freqs_hz[idx] * p) / total)


def fractal_exponent(psd: Psd, lo_hz: float, hi_hz: float) -> float:
    """Negative slope of the least-squares ln(power) vs ln(freq) fit."""
    idx = _band_bins(psd, lo_hz, hi_hz, min_bins=3)
    p = psd.power[idx]
    if np.any(p <= 0.0):
        n_bad = int(np.sum(p <= 0.0))
        raise NonPositivePower(
            f"{n_bad} bins in [{lo_hz:g}, {hi_hz:g}] Hz have zero power; log-log fit undefined"
        )
    logf = np.log(psd.freqs_hz[idx])
    logp = np.log(p)
    slope = np.polyfit(logf, logp, 1)[0]
    return float(-slope)


# --- the 24-feature vector ------------------------------------------------------


def extract_features(
    rec: Recording,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    overlap_frac: float = DEFAULT_OVERLAP,
) -> FeatureVector:
    """Compute the ordered f01..f24 vector for one recording.

    The EOG composite used for f05-f08, f13, f16, f19 and f22 is
    (LEOG + REOG) / 2; f14 correlates the raw pair.
    """
    c3 = rec.channel("C3")
    oz = rec.channel("OZ")
    leog = rec.channel("LEOG")
    reog = rec.channel("REOG")
    rate = c3.sample_rate_hz
    eog = (leog.samples + reog.samples) / 2.0

    def step(feature: str, fn, *args):
        try:
            return fn(*args)
        except StrokesigError as e:
            raise FeatureError(feature, e) from e

    psd_c3 = step("f01-f04", welch_psd, c3.samples, rate, segment_len, overlap_frac)
    psd_eog = step("f05-f08", welch_psd, eog, rate, segment_len, overlap_frac)
    psd_oz = step("f09-f12", welch_psd, oz.samples, rate, segment_len, overlap_frac)

    values = np.empty(24)
    values[0:4] = step("f01-f04", relative_band_powers, psd_c3)
    values[4:8] = step("f05-f08", relative_band_powers, psd_eog)
    values[8:12] = step("f09-f12", relative_band_powers, psd_oz)
    values[12] = step("f13", signal_stddev, eog)
    values[13] = step("f14", pearson_correlation, leog.samples, reog.samples)
    values[14] = step("f15", kurtosis, c3.samples)
    values[15] = step("f16", kurtosis, eog)
    values[16] = step("f17", kurtosis, oz.samples)
    for i, psd in enumerate((psd_c3, psd_eog, psd_oz)):
        values[17 + i] = step(f"f{18 + i}", spectral_entropy, psd, *WIDEBAND_HZ)
        values[20 + i] = step(f"f{21 + i}", spectral_mean, psd, *WIDEBAND_HZ)
    values[23] = step("f24", fractal_exponent, psd_c3, *FRACTAL_HZ)

    return FeatureVector(values, rec.subject_id, rec.label)


# --- brain symmetry index --------------------------------------------------------


def brain_symmetry_index(left: Sequence[Psd], right: Sequence[Psd]) -> BsiResult:
    """Mean over pairs of |mean over 1-25 Hz bins of (R - L) / (R + L)|."""
    if len(left) != len(right):
        raise PairCountMismatch(f"{len(left)} left PSDs vs {len(right)} right PSDs")
    if len(left) == 0:
        raise PairCountMismatch("need at least one left/right PSD pair")

    lo, hi = SYMMETRY_BAND_HZ
    pair_values = []
    n_bins = 0
    for j, (lpsd, rpsd) in enumerate(zip(left, right)):
        for side, psd in (("left", lpsd), ("right", rpsd)):
            if not psd.covers(lo, hi):
                raise BandNotCovered(
                    f"pair {j} {side} PSD does not cover [{lo:g}, {hi:g}] Hz"
                )
        lidx = np.flatnonzero(lpsd.band_mask(lo, hi))
        ridx = np.flatnonzero(rpsd.band_mask(lo, hi))
        lf, rf = lpsd.freqs_hz[lidx], rpsd.freqs_hz[ridx]
        if lf.size != rf.size or not np.allclose(lf, rf):
            raise GridMismatch(f"pair {j}: left/right frequency grids differ in-band")
        lam, rho = lpsd.power[lidx], rpsd.power[ridx]
        denom = rho + lam
        if np.any(denom <= 0.0):
            bad = lf[np.flatnonzero(denom <= 0.0)[0]]
            raise DegenerateBin(f"pair {j}: zero left+right power at {bad:g} Hz")
        pair_values.append(abs(float(np.mean((rho - lam) / denom))))
        n_bins = lf.size

    return BsiResult(
        value=float(np.mean(pair_values)),
        n_freq_bins=n_bins,
        n_pairs=len(pair_values),
    )


def brain_symmetry_for_recording(
    rec: Recording,
    segment_len: int = DEFAULT_SEGMENT_LEN,
    overlap_frac: float = DEFAULT_OVERLAP,
) -> BsiResult | None:
    """Single-pair index using C3 (left) vs C4 (right).

    Returns None when the recording has no C4 counterpart, as on
    clinical-style 4-channel data; the index is then unavailable rather
    than fabricated from non-homologous channels.
    """
    if not rec.has_channel("C4"):
        return None
    c3 = rec.channel("C3")
    c4 = rec.channel("C4")
    left = welch_psd(c3.samples, c3.sample_rate_hz, segment_len, overlap_frac)
    right = welch_psd(c4.samples, c4.sample_rate_hz, segment_len, overlap_frac)
    return brain_symmetry_index([left], [right])


# --- feature matrix CSV -----------------------------------------------------------


def write_feature_csv(features: Sequence[FeatureVector], path: str | Path) -> None:
    """Write the feature matrix contract: subject_id,label,f01..f24."""
    with open(path, "w", newline="") as fh:
        _write_feature_rows(features, fh)


def feature_csv_bytes(features: Sequence[FeatureVector]) -> bytes:
    buf = io.StringIO(newline="")
    _write_feature_rows(features, buf)
    return buf.getvalue().encode("utf-8")


def _write_feature_rows(features: Sequence[FeatureVector], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["subject_id", "label", *FEATURE_NAMES])
    for fv in features:
        writer.writerow(
            [fv.subject_id, int(fv.label), *(f"{v:.9g}" for v in fv.values)]
        )


def read_feature_csv(path: str | Path) -> list[FeatureVector]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["subject_id", "label", *FEATURE_NAMES]
        if header != expected:
            raise ValueError(f"unexpected feature CSV header in {path}")
        out = []
        for row in reader:
            if not row:
                continue
            subject_id, label, *vals = row
            out.append(
                FeatureVector(np.array([float(v) for v in vals]), subject_id, Label(int(label)))
            )
    return out
