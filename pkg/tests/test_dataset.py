"""WAV io, manifests, resampling, and the stratified split."""

import logging

import numpy as np
import pytest
from scipy.io import wavfile

from pcgkit.dataset import (Label, ManifestEntry, SignalRecording, load_manifest,
                            load_wav, read_manifest_file, resample, save_manifest,
                            split_dataset, write_wav)
from pcgkit.errors import DataError


def _write_pcm(path, ints, rate=1000):
    wavfile.write(str(path), rate, np.asarray(ints, dtype=np.int16))


def test_load_wav_fixed_point_scaling(tmp_path):
    path = tmp_path / "scale.wav"
    _write_pcm(path, [0, 16384, -32768, 32767])
    rec = load_wav(str(path))
    assert rec.samples[0] == 0.0
    assert rec.samples[1] == 0.5
    assert rec.samples[2] == -1.0
    assert np.abs(rec.samples).max() <= 1.0
    assert rec.recording_id == "scale"


def test_wav_round_trip_bit_exact(tmp_path):
    # int16-representable values survive the write/load pair untouched
    values = np.array([0, 1, -1, 12345, -32768, 32767, 100, -4096]) / 32768.0
    path = tmp_path / "rt.wav"
    write_wav(str(path), values, 2000)
    rec = load_wav(str(path))
    assert rec.rate == 2000
    assert np.array_equal(rec.samples, values)


def test_load_wav_rejects_non_int16(tmp_path):
    path = tmp_path / "float.wav"
    wavfile.write(str(path), 1000, np.zeros(16, dtype=np.float32))
    with pytest.raises(DataError):
        load_wav(str(path))


def test_signal_recording_validation():
    with pytest.raises(DataError):
        SignalRecording("a", np.zeros(0), 1000)
    with pytest.raises(DataError):
        SignalRecording("a", np.array([0.0, np.nan]), 1000)
    with pytest.raises(DataError):
        SignalRecording("a", np.array([0.0, 1.5]), 1000)
    with pytest.raises(DataError):
        SignalRecording("a", np.zeros(4), 0)
    rec = SignalRecording("a", np.zeros(500), 1000)
    assert rec.duration == 0.5


def _make_dataset_dir(tmp_path, reference_lines, wav_names):
    for name in wav_names:
        _write_pcm(tmp_path / (name + ".wav"), np.zeros(64, dtype=np.int16))
    (tmp_path / "REFERENCE.csv").write_text("\n".join(reference_lines) + "\n")


def test_manifest_label_mapping(tmp_path):
    _make_dataset_dir(tmp_path, ["a0001,1", "a0002,-1"], ["a0001", "a0002"])
    entries = load_manifest(str(tmp_path))
    assert [(e.recording_id, e.label) for e in entries] == [
        ("a0001", Label.ABNORMAL), ("a0002", Label.NORMAL)]


def test_manifest_orphan_audio_warns(tmp_path, caplog):
    _make_dataset_dir(tmp_path, ["a0001,1", "a0002,-1"],
                      ["a0001", "a0002", "a0003"])
    with caplog.at_level(logging.WARNING):
        entries = load_manifest(str(tmp_path))
    assert len(entries) == 2
    warnings = [r for r in caplog.records if r.levelno == logging.WARNING]
    assert len(warnings) == 1
    assert "a0003" in warnings[0].getMessage()


def test_manifest_missing_audio_skipped_with_warning(tmp_path, caplog):
    _make_dataset_dir(tmp_path, ["a0001,1", "a0002,-1"], ["a0001"])
    with caplog.at_level(logging.WARNING):
        entries = load_manifest(str(tmp_path))
    assert [e.recording_id for e in entries] == ["a0001"]
    assert any("a0002" in r.getMessage() for r in caplog.records)


def test_manifest_duplicate_id_is_error(tmp_path):
    _make_dataset_dir(tmp_path, ["a0001,1", "a0001,-1"], ["a0001"])
    with pytest.raises(DataError):
        load_manifest(str(tmp_path))


def test_manifest_bad_label_is_error(tmp_path):
    _make_dataset_dir(tmp_path, ["a0001,2"], ["a0001"])
    with pytest.raises(DataError):
        load_manifest(str(tmp_path))


def test_manifest_file_round_trip(tmp_path):
    entries = [ManifestEntry("x1", "/tmp/x1.wav", Label.NORMAL, "A"),
               ManifestEntry("x2", "/tmp/x2.wav", Label.ABNORMAL, "synthetic")]
    path = str(tmp_path / "manifest.txt")
    save_manifest(path, entries)
    assert read_manifest_file(path) == entries


def test_resample_identity_and_dc():
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.5, 0.5, 777)
    assert np.array_equal(resample(x, 1000, 1000), x)
    dc = np.full(2000, 0.3)
    out = resample(dc, 2000, 1000)
    assert out.size == 1000
    assert np.abs(out - 0.3).max() < 1e-6


def test_resample_sine_fidelity():
    rate, target = 2000, 1000
    t = np.arange(4000) / rate
    x = np.sin(2 * np.pi * 100.0 * t)
    out = resample(x, rate, target)
    ref = np.sin(2 * np.pi * 100.0 * np.arange(out.size) / target)
    corr = np.corrcoef(out, ref)[0, 1]
    assert corr > 0.999


def test_resample_linearity(rng):
    a = rng.standard_normal(1500)
    b = rng.standard_normal(1500)
    lhs = resample(2.0 * a + 0.5 * b, 1500, 1000)
    rhs = 2.0 * resample(a, 1500, 1000) + 0.5 * resample(b, 1500, 1000)
    assert np.abs(lhs - rhs).max() < 1e-9


def test_resample_upsample_cap():
    with pytest.raises(DataError):
        resample(np.zeros(100), 1000, 4001)
    assert resample(np.zeros(100), 1000, 4000).size == 400


def _entries(n_normal, n_abnormal):
    out = []
    for i in range(n_normal):
        out.append(ManifestEntry("n%03d" % i, "n%03d.wav" % i, Label.NORMAL, "A"))
    for i in range(n_abnormal):
        out.append(ManifestEntry("a%03d" % i, "a%03d.wav" % i, Label.ABNORMAL, "A"))
    return out


def test_split_counts_and_stratification():
    entries = _entries(80, 20)
    split = split_dataset(entries, seed=1)
    assert (len(split.train), len(split.validation), len(split.test)) == (75, 15, 10)
    abnormal_ids = {e.recording_id for e in entries if e.label is Label.ABNORMAL}
    assert sum(1 for rid in split.test if rid in abnormal_ids) == 2


def test_split_deterministic():
    entries = _entries(30, 10)
    a = split_dataset(entries, seed=9)
    b = split_dataset(entries, seed=9)
    assert a.train == b.train and a.validation == b.validation and a.test == b.test


def test_split_degenerate_ratios():
    entries = _entries(5, 5)
    split = split_dataset(entries, ratios=(1.0, 0.0, 0.0), seed=0)
    assert sorted(split.train) == sorted(e.recording_id for e in entries)
    assert split.validation == [] and split.test == []


def test_split_disjoint_union_property():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n_n = int(rng.integers(3, 40))
        n_a = int(rng.integers(3, 40))
        entries = _entries(n_n, n_a)
        split = split_dataset(entries, seed=int(rng.integers(0, 1000)))
        pieces = [set(split.train), set(split.validation), set(split.test)]
        assert sum(len(p) for p in pieces) == n_n + n_a
        assert pieces[0] | pieces[1] | pieces[2] == {e.recording_id for e in entries}


def test_split_ratio_validation():
    entries = _entries(10, 10)
    with pytest.raises(DataError):
        split_dataset(entries, ratios=(0.5, 0.5, 0.5))
    with pytest.raises(DataError):
        split_dataset(entries, ratios=(0.9, 0.1))
