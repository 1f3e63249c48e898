"""Recording/cohort data model, the .ssig binary format, and downsampling.

A cohort file is little-endian binary: magic ``SSIG``, version u32,
subject count u32; per subject an id (u16 length + UTF-8), a label byte
and a channel count u16; per channel a name (u16 + UTF-8), the sample
rate as f64, the sample count as u64 and the raw f64 samples. Samples
round-trip bit-exactly.

Mixed-rate files (512 Hz and 256 Hz sources are both common) are
normalized to the cohort working rate at load time via :func:`downsample`.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DuplicateSubject,
    EmptyInput,
    IoFailure,
    MalformedFile,
    MissingChannel,
    NonIntegerFactor,
    VersionMismatch,
)

MAGIC = b"SSIG"
FORMAT_VERSION = 1

#: channels the feature extractor depends on
REQUIRED_CHANNELS = ("C3", "OZ", "LEOG", "REOG")

#: anti-alias FIR design, fixed so downsampling is reproducible bit-for-bit
FIR_TAPS = 127
CUTOFF_FRACTION = 0.8  # of the output Nyquist


class Label(IntEnum):
    NORMAL = 0
    STROKE = 1


@dataclass(frozen=True)
class Channel:
    name: str
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError(f"channel {self.name!r}: need a nonempty 1-D sample array")
        if not self.sample_rate_hz > 0:
            raise ValueError(f"channel {self.name!r}: sample rate must be positive")

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz


@dataclass(frozen=True)
class Recording:
    """One subject's multichannel recording.

    The four channels the pipeline consumes (C3, OZ, LEOG, REOG) must be
    present exactly once; extra channels (e.g. C4 from the synthetic
    generator) are carried along untouched.
    """

    subject_id: str
    label: Label
    channels: tuple[Channel, ...]

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "channels", tuple(self.channels))
        names = [c.name for c in self.channels]
        for required in REQUIRED_CHANNELS:
            if names.count(required) != 1:
                raise MissingChannel(
                    f"subject {self.subject_id!r}: channel {required!r} must appear "
                    f"exactly once (found {names.count(required)})"
                )
        durations = [c.duration_s for c in self.channels]
        tol = 1.0 / min(c.sample_rate_hz for c in self.channels)
        if max(durations) - min(durations) > tol + 1e-12:
            raise ValueError(
                f"subject {self.subject_id!r}: channel durations differ by more "
                f"than one sample ({min(durations):.6f}s vs {max(durations):.6f}s)"
            )

    def channel(self, name: str) -> Channel:
        for c in self.channels:
            if c.name == name:
                return c
        raise MissingChannel(f"subject {self.subject_id!r}: no channel {name!r}")

    def has_channel(self, name: str) -> bool:
        return any(c.name == name for c in self.channels)


@dataclass(frozen=True)
class CohortMeta:
    source: str = ""
    working_rate_hz: float = 64.0


@dataclass(frozen=True)
class Cohort:
    recordings: tuple[Recording, ...]
    metadata: CohortMeta = field(default_factory=CohortMeta)

    def __post_init__(self):
        object.__setattr__(self, "recordings", tuple(self.recordings))
        seen = set()
        for rec in self.recordings:
            if rec.subject_id in seen:
                raise DuplicateSubject(f"subject id {rec.subject_id!r} appears twice")
            seen.add(rec.subject_id)

    def __len__(self) -> int:
        return len(self.recordings)

    def labels(self) -> np.ndarray:
        return np.array([int(r.label) for r in self.recordings], dtype=np.int64)


# --- anti-aliased downsampling ------------------------------------------------


def _antialias_fir(factor: int) -> np.ndarray:
    """Linear-phase windowed-sinc low-pass, unit DC gain.

    Cutoff sits at ``CUTOFF_FRACTION`` of the post-decimation Nyquist,
    expressed against the input rate as 0.8 * (0.5 / factor).
    """
    cutoff = CUTOFF_FRACTION * 0.5 / factor  # cycles per input sample
    n = np.arange(FIR_TAPS) - (FIR_TAPS - 1) / 2.0
    taps = 2.0 * cutoff * np.sinc(2.0 * cutoff * n) * np.hamming(FIR_TAPS)
    return taps / taps.sum()


def downsample(samples: Sequence[float], from_hz: float, to_hz: float) -> np.ndarray:
    """Anti-alias filter then decimate by the integer factor from_hz/to_hz.

    The filter is applied zero-phase (symmetric FIR, group delay
    compensated) over a reflect-padded signal, so a constant stays
    constant and there is no ramp artifact at the record edges. Output
    length is exactly ``floor(n / factor)``.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise EmptyInput("cannot downsample an empty signal")
    ratio = from_hz / to_hz
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise NonIntegerFactor(
            f"{from_hz} Hz -> {to_hz} Hz is not an integer decimation (ratio {ratio:g})"
        )
    if factor == 1:
        return x.copy()
    out_len = x.size // factor
    if out_len == 0:
        return np.empty(0, dtype=np.float64)

    half = (FIR_TAPS - 1) // 2
    mode = "reflect" if x.size >= 2 else "symmetric"
    padded = np.pad(x, half, mode=mode)
    filtered = np.convolve(padded, _antialias_fir(factor), mode="valid")
    return filtered[: out_len * factor : factor]


# --- binary cohort format ----------------------------------------------------


def _write_str(buf: io.BufferedIOBase, text: str) -> None:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValueError(f"string too long for format: {text[:32]!r}...")
    buf.write(struct.pack("<H", len(raw)))
    buf.write(raw)


def _read_exact(buf: io.BufferedIOBase, n: int, what: str) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise MalformedFile(f"truncated file while reading {what}")
    return raw


def _read_str(buf: io.BufferedIOBase, what: str) -> str:
    (n,) = struct.unpack("<H", _read_exact(buf, 2, f"{what} length"))
    raw = _read_exact(buf, n, what)
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MalformedFile(f"{what} is not valid UTF-8") from e


def save_cohort(cohort: Cohort, path: str | Path) -> None:
    """Write a cohort to ``path``; samples stored as little-endian f64."""
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(cohort.recordings)))
            for rec in cohort.recordings:
                _write_str(fh, rec.subject_id)
                fh.write(struct.pack("<B", int(rec.label)))
                fh.write(struct.pack("<H", len(rec.channels)))
                for ch in rec.channels:
                    _write_str(fh, ch.name)
                    fh.write(struct.pack("<d", ch.sample_rate_hz))
                    fh.write(struct.pack("<Q", ch.samples.size))
                    fh.write(ch.samples.astype("<f8", copy=False).tobytes())
    except OSError as e:
        raise IoFailure(f"cannot write {path}: {e}") from e


def load_cohort(path: str | Path, working_rate_hz: float = 64.0) -> Cohort:
    """Load a .ssig file, normalizing every channel to ``working_rate_hz``.

    Channels already at the working rate pass through untouched, so a
    cohort saved at the working rate reloads bit-exactly.
    """
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoFailure(f"cannot open {path}: {e}") from e
    with fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise MalformedFile(f"bad magic {magic!r}, expected {MAGIC!r}")
        version, n_subjects = struct.unpack("<II", _read_exact(fh, 8, "header"))
        if version != FORMAT_VERSION:
            raise VersionMismatch(f"file version {version}, reader supports {FORMAT_VERSION}")
        recordings = []
        for _ in range(n_subjects):
            subject_id = _read_str(fh, "subject id")
            (label_byte,) = struct.unpack("<B", _read_exact(fh, 1, "label"))
            if label_byte not in (0, 1):
                raise MalformedFile(f"subject {subject_id!r}: label byte {label_byte} not in {{0,1}}")
            (n_channels,) = struct.unpack("<H", _read_exact(fh, 2, "channel count"))
            channels = []
            for _ in range(n_channels):
                name = _read_str(fh, "channel name")
                (rate,) = struct.unpack("<d", _read_exact(fh, 8, "sample rate"))
                (count,) = struct.unpack("<Q", _read_exact(fh, 8, "sample count"))
                raw = _read_exact(fh, count * 8, f"samples of {name!r}")
                samples = np.frombuffer(raw, dtype="<f8").astype(np.float64)
                if abs(rate - working_rate_hz) > 1e-9:
                    samples = downsample(samples, rate, working_rate_hz)
                    rate = working_rate_hz
                channels.append(Channel(name, samples, rate))
            recordings.append(Recording(subject_id, Label(label_byte), tuple(channels)))
        trailing = fh.read(1)
        if trailing:
            raise MalformedFile("trailing bytes after last subject")
    meta = CohortMeta(source=str(path), working_rate_hz=working_rate_hz)
    return Cohort(tuple(recordings), meta)
