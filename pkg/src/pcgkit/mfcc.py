"""Mel-frequency cepstral coefficients for heart-sound segments.

Heart sounds concentrate below a few hundred hertz, so the mel filterbank
spans 0-500 Hz at the 1000 Hz canonical rate. Frames are 25 ms with a 10 ms
hop, Hamming-windowed, zero-padded to a 256-point FFT; 26 triangular mel
filters feed a floored log and an orthonormal DCT-II, of which the first 13
coefficients are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft

from .dataset import Label
from .errors import DataError


@dataclass
class MfccConfig:
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_coeffs: int = 13
    n_mel: int = 26
    fft_size: int = 256
    mel_low_hz: float = 0.0
    mel_high_hz: float = 500.0
    log_floor: float = 1e-10


@dataclass
class FeatureMatrix:
    segment_id: str
    values: np.ndarray       # frames x n_coeffs
    label: Label = Label.UNLABELED


def mel_scale(freq_hz):
    """Hz to mel: m = 2595 log10(1 + f / 700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(freq_hz, dtype=np.float64) / 700.0)


def mel_inverse(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg, rate):
    """Triangular filters with centers equally spaced on the mel scale.

    Filter k rises from center k-1 and falls to center k+1 (evaluated in Hz
    per FFT bin), so each filter is zero at its neighbors' centers.
    """
    centers_mel = np.linspace(mel_scale(cfg.mel_low_hz), mel_scale(cfg.mel_high_hz),
                              cfg.n_mel + 2)
    centers_hz = mel_inverse(centers_mel)
    freqs = np.fft.rfftfreq(cfg.fft_size, d=1.0 / rate)
    bank = np.zeros((cfg.n_mel, freqs.size))
    for k in range(cfg.n_mel):
        left, mid, right = centers_hz[k], centers_hz[k + 1], centers_hz[k + 2]
        rising = (freqs - left) / (mid - left)
        falling = (right - freqs) / (right - mid)
        bank[k] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


def frame_signal(samples, window, hop):
    """Frame count follows floor((n - window) / hop) + 1."""
    n = samples.size
    if n < window:
        raise DataError("signal of %d samples shorter than one %d-sample frame"
                        % (n, window))
    n_frames = (n - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    return samples[idx]


def compute_mfcc(samples, rate, cfg=None, segment_id="", label=Label.UNLABELED):
    """MFCC matrix (frames x 13) for one audio segment."""
    cfg = cfg or MfccConfig()
    samples = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise DataError("segment %s: non-finite samples" % segment_id)
    window = int(round(cfg.window_ms * rate / 1000.0))
    hop = int(round(cfg.hop_ms * rate / 1000.0))
    if cfg.fft_size < window:
        raise DataError("fft_size %d smaller than the %d-sample window"
                        % (cfg.fft_size, window))
    if cfg.n_coeffs > cfg.n_mel:
        raise DataError("cannot keep %d coefficients from %d mel filters"
                        % (cfg.n_coeffs, cfg.n_mel))
    if cfg.mel_high_hz > rate / 2.0:
        raise DataError("mel_high %.0f Hz above the Nyquist limit of %d Hz audio"
                        % (cfg.mel_high_hz, rate))
    frames = frame_signal(samples, window, hop) * np.hamming(window)
    spectra = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = np.abs(spectra) ** 2 / cfg.fft_size
    mel_energy = power @ mel_filterbank(cfg, rate).T
    log_mel = np.log(np.maximum(mel_energy, cfg.log_floor))
    coeffs = scipy.fft.dct(log_mel, type=2, norm="ortho", axis=1)[:, :cfg.n_coeffs]
    return FeatureMatrix(segment_id, coeffs, label)


def mfcc_for_segment(segment, cfg=None):
    return compute_mfcc(segment.samples, segment.rate, cfg,
                        segment.segment_id, segment.label)


def summary_vector(values):
    """26-dim summary for the classical baselines: per-coefficient mean and std."""
    values = np.asarray(values, dtype=np.float64)
    return np.concatenate([values.mean(axis=0), values.std(axis=0)])


MAGIC = b"pcgkit-features version: 1\n"


def write_features(path, matrices):
    """Binary feature dump: ASCII per-record headers, little-endian float64 rows."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(b"count: %d\n" % len(matrices))
        for fm in matrices:
            frames, coeffs = fm.values.shape
            fh.write(b"segment: %s frames: %d coeffs: %d label: %d\n"
                     % (fm.segment_id.encode(), frames, coeffs, fm.label.value))
            fh.write(np.ascontiguousarray(fm.values, dtype="<f8").tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise DataError("%s: not a feature dump" % path)
        head = fh.readline().decode()
        if not head.startswith("count: "):
            raise DataError("%s: missing record count" % path)
        count = int(head[len("count: "):])
        matrices = []
        for _ in range(count):
            header = fh.readline().decode().split()
            if header[0] != "segment:":
                raise DataError("%s: malformed record header" % path)
            seg_id = header[1]
            frames = int(header[3])
            coeffs = int(header[5])
            label = Label(int(header[7]))
            data = np.frombuffer(fh.read(frames * coeffs * 8), dtype="<f8")
            matrices.append(FeatureMatrix(seg_id, data.reshape(frames, coeffs).copy(),
                                          label))
    return matrices
