import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import make_recording
from oracles import dominant_frequency

from strokesig import signal_io as sio
from strokesig.errors import (
    DuplicateSubject,
    EmptyInput,
    MalformedFile,
    MissingChannel,
    NonIntegerFactor,
)
from strokesig.signal_io import Channel, Cohort, CohortMeta, Label, Recording


def small_cohort(n=2, samples=256):
    recs = [make_recording(f"subj-{i}", Label(i % 2), n=samples) for i in range(n)]
    return Cohort(tuple(recs), CohortMeta(source="test", working_rate_hz=64.0))


# --- data model -------------------------------------------------------------


def test_recording_requires_all_four_channels():
    rng = np.random.default_rng(0)
    channels = tuple(
        Channel(name, rng.standard_normal(64), 64.0) for name in ("C3", "LEOG", "REOG")
    )
    with pytest.raises(MissingChannel, match="OZ"):
        Recording("s1", Label.NORMAL, channels)


def test_recording_rejects_duplicate_required_channel():
    rng = np.random.default_rng(0)
    names = ("C3", "C3", "OZ", "LEOG", "REOG")
    channels = tuple(Channel(n, rng.standard_normal(64), 64.0) for n in names)
    with pytest.raises(MissingChannel, match="C3"):
        Recording("s1", Label.NORMAL, channels)


def test_recording_rejects_mismatched_durations():
    rng = np.random.default_rng(0)
    channels = (
        Channel("C3", rng.standard_normal(640), 64.0),
        Channel("OZ", rng.standard_normal(64), 64.0),
        Channel("LEOG", rng.standard_normal(640), 64.0),
        Channel("REOG", rng.standard_normal(640), 64.0),
    )
    with pytest.raises(ValueError, match="duration"):
        Recording("s1", Label.NORMAL, channels)


def test_cohort_rejects_duplicate_subject_ids():
    recs = (make_recording("same", n=64), make_recording("same", n=64))
    with pytest.raises(DuplicateSubject):
        Cohort(recs)


# --- file round trips ----------------------------------------------------------


def test_round_trip_two_subjects(tmp_path):
    cohort = small_cohort(2)
    path = tmp_path / "c.ssig"
    sio.save_cohort(cohort, path)
    loaded = sio.load_cohort(path)
    assert len(loaded) == 2
    for orig, back in zip(cohort.recordings, loaded.recordings):
        assert back.subject_id == orig.subject_id
        assert back.label == orig.label
        for co, cb in zip(orig.channels, back.channels):
            assert cb.name == co.name
            assert cb.sample_rate_hz == co.sample_rate_hz
            assert np.array_equal(cb.samples, co.samples)  # bit-exact


def test_round_trip_empty_cohort(tmp_path):
    path = tmp_path / "empty.ssig"
    sio.save_cohort(Cohort(()), path)
    assert len(sio.load_cohort(path)) == 0


def test_round_trip_62_subjects_preserves_order(tmp_path):
    cohort = small_cohort(62, samples=32)
    path = tmp_path / "c62.ssig"
    sio.save_cohort(cohort, path)
    loaded = sio.load_cohort(path)
    assert [r.subject_id for r in loaded.recordings] == [
        r.subject_id for r in cohort.recordings
    ]


def test_round_trip_constant_zero_channel_bit_exact(tmp_path):
    rec = make_recording("z", n=128, c3=np.zeros(128))
    path = tmp_path / "z.ssig"
    sio.save_cohort(Cohort((rec,)), path)
    back = sio.load_cohort(path).recordings[0]
    assert np.array_equal(back.channel("C3").samples, np.zeros(128))


def test_round_trip_extreme_values_bit_exact(tmp_path):
    vals = np.array([1e-300, -1e300, np.pi, 5e-324, 0.1] * 26, dtype=np.float64)
    rec = make_recording("x", n=vals.size, c3=vals)
    path = tmp_path / "x.ssig"
    sio.save_cohort(Cohort((rec,)), path)
    back = sio.load_cohort(path).recordings[0]
    assert back.channel("C3").samples.tobytes() == vals.tobytes()


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.ssig"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(MalformedFile, match="magic"):
        sio.load_cohort(path)


def test_load_rejects_unknown_format_version(tmp_path):
    import struct

    from strokesig.errors import VersionMismatch

    path = tmp_path / "v2.ssig"
    path.write_bytes(b"SSIG" + struct.pack("<II", 2, 0))
    with pytest.raises(VersionMismatch):
        sio.load_cohort(path)


def test_load_rejects_truncated_file(tmp_path):
    cohort = small_cohort(1)
    path = tmp_path / "t.ssig"
    sio.save_cohort(cohort, path)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) - 16])
    with pytest.raises(MalformedFile, match="truncated"):
        sio.load_cohort(path)


def test_load_rejects_missing_channel(tmp_path):
    # hand-build a file whose only subject lacks OZ
    import struct

    buf = bytearray()
    buf += b"SSIG" + struct.pack("<II", 1, 1)
    buf += struct.pack("<H", 2) + b"s1" + struct.pack("<B", 0) + struct.pack("<H", 3)
    for name in ("C3", "LEOG", "REOG"):
        raw = name.encode()
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<d", 64.0) + struct.pack("<Q", 4)
        buf += np.zeros(4).tobytes()
    path = tmp_path / "m.ssig"
    path.write_bytes(bytes(buf))
    with pytest.raises(MissingChannel, match="OZ"):
        sio.load_cohort(path)


def test_load_rejects_duplicate_subjects(tmp_path):
    cohort = small_cohort(2)
    path = tmp_path / "d.ssig"
    sio.save_cohort(cohort, path)
    raw = bytearray(path.read_bytes())
    # both subject ids become "subj-0"
    raw = raw.replace(b"subj-1", b"subj-0")
    path.write_bytes(bytes(raw))
    with pytest.raises(DuplicateSubject):
        sio.load_cohort(path)


def test_load_normalizes_mixed_rates_to_working_rate(tmp_path):
    rng = np.random.default_rng(1)
    channels = (
        Channel("C3", rng.standard_normal(512 * 10), 512.0),
        Channel("OZ", rng.standard_normal(256 * 10), 256.0),
        Channel("LEOG", rng.standard_normal(64 * 10), 64.0),
        Channel("REOG", rng.standard_normal(64 * 10), 64.0),
    )
    rec = Recording("mixed", Label.STROKE, channels)
    path = tmp_path / "mix.ssig"
    sio.save_cohort(Cohort((rec,)), path)
    loaded = sio.load_cohort(path, working_rate_hz=64.0)
    for ch in loaded.recordings[0].channels:
        assert ch.sample_rate_hz == 64.0
        assert ch.samples.size == 640


def test_fifteen_minutes_at_64hz_is_57600_samples(tmp_path):
    rng = np.random.default_rng(2)
    channels = tuple(
        Channel(name, rng.standard_normal(512 * 900), 512.0)
        for name in ("C3", "OZ", "LEOG", "REOG")
    )
    rec = Recording("full", Label.NORMAL, channels)
    path = tmp_path / "f.ssig"
    sio.save_cohort(Cohort((rec,)), path)
    loaded = sio.load_cohort(path, working_rate_hz=64.0)
    for ch in loaded.recordings[0].channels:
        assert ch.samples.size == 57600


# --- downsampling -----------------------------------------------------------------


def test_downsample_length_512_to_64():
    x = np.random.default_rng(3).standard_normal(460800)
    assert sio.downsample(x, 512.0, 64.0).size == 57600


def test_downsample_length_is_floor():
    rng = np.random.default_rng(4)
    for n in (8, 9, 15, 16, 17, 100, 1001):
        out = sio.downsample(rng.standard_normal(n), 256.0, 64.0)
        assert out.size == n // 4


def test_downsample_constant_is_preserved():
    out = sio.downsample(np.full(5120, 5.0), 512.0, 64.0)
    assert_allclose(out[5:-5], 5.0, atol=1e-6)


def test_downsample_keeps_tone_at_10hz():
    t = np.arange(460800) / 512.0
    out = sio.downsample(np.sin(2 * np.pi * 10.0 * t), 512.0, 64.0)
    assert dominant_frequency(out, 64.0) == pytest.approx(10.0, abs=64.0 / out.size)


def test_downsample_is_linear():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(4096)
    y = rng.standard_normal(4096)
    a, b = 2.5, -1.25
    lhs = sio.downsample(a * x + b * y, 256.0, 64.0)
    rhs = a * sio.downsample(x, 256.0, 64.0) + b * sio.downsample(y, 256.0, 64.0)
    assert_allclose(lhs, rhs, atol=1e-9)


def test_downsample_band_limited_rms_close_to_ideal_decimation():
    # content well below the working Nyquist: passband is untouched
    rng = np.random.default_rng(6)
    t = np.arange(512 * 60) / 512.0
    x = np.zeros_like(t)
    for f, a in ((2.0, 1.0), (6.5, 0.8), (11.0, 0.6), (17.0, 0.4)):
        x += a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    out = sio.downsample(x, 512.0, 64.0)
    ideal = x[::8]
    interior = slice(64, -64)
    rms_out = np.sqrt(np.mean(out[interior] ** 2))
    rms_ideal = np.sqrt(np.mean(ideal[interior] ** 2))
    assert abs(rms_out - rms_ideal) / rms_ideal < 0.01


def test_downsample_identity_factor_copies():
    x = np.random.default_rng(7).standard_normal(100)
    out = sio.downsample(x, 64.0, 64.0)
    assert np.array_equal(out, x)
    assert out is not x


def test_downsample_rejects_non_integer_factor():
    with pytest.raises(NonIntegerFactor):
        sio.downsample(np.ones(100), 96.0, 64.0)


def test_downsample_rejects_empty_input():
    with pytest.raises(EmptyInput):
        sio.downsample(np.array([]), 512.0, 64.0)
