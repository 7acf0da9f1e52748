"""Dataset access: WAV loading, reference labels, resampling, and splits.

Recordings follow the PhysioNet/CinC 2016 layout: a directory of 16-bit PCM
WAV files plus a REFERENCE.csv with lines "<id>,<label>" where -1 marks a
normal and 1 an abnormal recording. All audio is normalized to float64 in
[-1, 1] and resampled to a canonical 1000 Hz before feature extraction.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DataError

log = logging.getLogger(__name__)

CANONICAL_RATE = 1000
MAX_UPSAMPLE_FACTOR = 4


class Label(Enum):
    NORMAL = -1
    ABNORMAL = 1
    UNLABELED = 0


@dataclass
class SignalRecording:
    """A single heart-sound recording with its metadata."""

    recording_id: str
    samples: np.ndarray
    rate: int
    label: Label = Label.UNLABELED
    source_database: str = "unknown"

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise DataError("recording %s: samples must be a non-empty 1-D array"
                            % self.recording_id)
        if not np.all(np.isfinite(self.samples)):
            raise DataError("recording %s: non-finite samples" % self.recording_id)
        if np.abs(self.samples).max() > 1.0 + 1e-9:
            raise DataError("recording %s: samples exceed [-1, 1]" % self.recording_id)
        if self.rate <= 0:
            raise DataError("recording %s: non-positive sample rate" % self.recording_id)

    @property
    def duration(self) -> float:
        return self.samples.size / self.rate


@dataclass
class ManifestEntry:
    recording_id: str
    path: str
    label: Label
    source_database: str = "unknown"


@dataclass
class DatasetSplit:
    train: list
    validation: list
    test: list
    seed: int
    ratios: tuple = (0.75, 0.15, 0.10)


def load_wav(path, recording_id=None, label=Label.UNLABELED, database="unknown"):
    """Load a 16-bit PCM WAV file as a SignalRecording in [-1, 1].

    Sample values are divided by 32768, the maximum magnitude of the int16
    sample type, so -32768 maps exactly to -1.0.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise DataError("%s: cannot read WAV (%s)" % (path, exc))
    if data.ndim == 2:
        data = data[:, 0]
    if data.dtype != np.int16:
        raise DataError("%s: unsupported encoding %s (16-bit PCM required)"
                        % (path, data.dtype))
    if data.size == 0:
        raise DataError("%s: zero-length audio" % path)
    if recording_id is None:
        recording_id = os.path.splitext(os.path.basename(path))[0]
    samples = data.astype(np.float64) / 32768.0
    return SignalRecording(recording_id, samples, int(rate), label, database)


def write_wav(path, samples, rate):
    """Write float samples in [-1, 1] as 16-bit PCM."""
    samples = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.round(samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, int(rate), ints)


def resample(samples, rate, target_rate):
    """Polyphase resampling with a linear-phase FIR anti-aliasing filter."""
    samples = np.asarray(samples, dtype=np.float64)
    if rate <= 0 or target_rate <= 0:
        raise DataError("sample rates must be positive")
    if target_rate == rate:
        return samples.copy()
    if target_rate > rate * MAX_UPSAMPLE_FACTOR:
        raise DataError("refusing to upsample %d Hz to %d Hz (more than %dx)"
                        % (rate, target_rate, MAX_UPSAMPLE_FACTOR))
    frac = Fraction(int(target_rate), int(rate))
    # padtype='line' keeps constant signals constant through the edges.
    return resample_poly(samples, frac.numerator, frac.denominator, padtype="line")


def load_recording(entry, target_rate=CANONICAL_RATE):
    """Load a manifest entry and bring it to the canonical rate.

    The anti-aliasing filter can overshoot slightly, so resampled audio is
    clipped back into [-1, 1].
    """
    rec = load_wav(entry.path, entry.recording_id, entry.label, entry.source_database)
    if rec.rate != target_rate:
        samples = np.clip(resample(rec.samples, rec.rate, target_rate), -1.0, 1.0)
        rec = SignalRecording(rec.recording_id, samples, target_rate,
                              rec.label, rec.source_database)
    return rec


def _infer_database(directory):
    base = os.path.basename(os.path.normpath(directory)).lower()
    if len(base) >= 2 and base[-2] in "-_" and base[-1] in "abcdef":
        return base[-1].upper()
    if base in list("abcdef"):
        return base.upper()
    return "synthetic"


def load_manifest(directory, database=None):
    """Read REFERENCE.csv from a dataset directory.

    Lines are "<id>,<label>" with label -1 (normal) or 1 (abnormal); blank
    lines and '#' comments are tolerated. Entries whose WAV file is missing
    are skipped with a warning. Duplicate ids are an error. The result is
    sorted by recording_id.
    """
    ref_path = os.path.join(directory, "REFERENCE.csv")
    if not os.path.isfile(ref_path):
        raise DataError("%s: no REFERENCE.csv" % directory)
    if database is None:
        database = _infer_database(directory)
    entries = {}
    with open(ref_path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 2:
                raise DataError("%s:%d: expected 'id,label'" % (ref_path, lineno))
            rec_id, label_str = parts
            try:
                label_val = int(label_str)
            except ValueError:
                raise DataError("%s:%d: label %r is not an integer" % (ref_path, lineno, label_str))
            if label_val not in (-1, 1):
                raise DataError("%s:%d: label must be -1 or 1, got %d"
                                % (ref_path, lineno, label_val))
            if rec_id in entries:
                raise DataError("%s: duplicate recording id %r" % (ref_path, rec_id))
            wav_path = os.path.join(directory, rec_id + ".wav")
            if not os.path.isfile(wav_path):
                log.warning("%s: audio file missing for %s, skipping", directory, rec_id)
                continue
            entries[rec_id] = ManifestEntry(rec_id, wav_path, Label(label_val), database)
    referenced = set(entries)
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext.lower() == ".wav" and stem not in referenced:
            log.warning("%s: %s has no reference line", directory, name)
    return [entries[k] for k in sorted(entries)]


def save_manifest(path, entries):
    """Write a manifest as versioned text: one (id, path, label, database) row per line."""
    with open(path, "w") as fh:
        fh.write("version: 1\n")
        for e in entries:
            fh.write("%s,%s,%d,%s\n" % (e.recording_id, e.path, e.label.value,
                                        e.source_database))


def read_manifest_file(path):
    entries = []
    with open(path) as fh:
        head = fh.readline().strip()
        if head != "version: 1":
            raise DataError("%s: expected 'version: 1' header" % path)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec_id, wav_path, label_str, database = line.split(",")
            entries.append(ManifestEntry(rec_id, wav_path, Label(int(label_str)), database))
    return entries


def split_dataset(entries, ratios=(0.75, 0.15, 0.10), seed=0):
    """Deterministic stratified train/validation/test split.

    Within each class the ids are shuffled with a generator seeded by `seed`
    and allocated by the largest-remainder rule, so split sizes are exact for
    exact ratios and each split preserves the class ratio as closely as the
    counts permit.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError("ratios must be three non-negative numbers")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError("ratios must sum to 1, got %r" % (ratios,))
    n_positive = sum(1 for r in ratios if r > 0)
    by_class = {}
    for e in entries:
        by_class.setdefault(e.label, []).append(e.recording_id)
    for label, ids in by_class.items():
        if len(ids) < n_positive:
            raise DataError("class %s has %d members, cannot stratify into %d splits"
                            % (label.name, len(ids), n_positive))
    rng = np.random.default_rng(seed)
    buckets = ([], [], [])
    for label in sorted(by_class, key=lambda l: l.value):
        ids = sorted(by_class[label])
        ids = [ids[i] for i in rng.permutation(len(ids))]
        n = len(ids)
        exact = [n * r for r in ratios]
        counts = [int(np.floor(x)) for x in exact]
        remainders = [x - c for x, c in zip(exact, counts)]
        short = n - sum(counts)
        for k in sorted(range(3), key=lambda k: (-remainders[k], k))[:short]:
            counts[k] += 1
        pos = 0
        for k in range(3):
            buckets[k].extend(ids[pos:pos + counts[k]])
            pos += counts[k]
    return DatasetSplit(sorted(buckets[0]), sorted(buckets[1]), sorted(buckets[2]),
                        seed=seed, ratios=ratios)
