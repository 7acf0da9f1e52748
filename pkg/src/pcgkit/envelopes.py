"""Envelope observations for heart-sound segmentation.

Four envelope functions are computed at the audio rate, resampled to the
50 Hz observation rate, and z-scored per recording:

  * homomorphic envelope: exp(lowpass(log(analytic amplitude)))
  * Hilbert envelope: magnitude of the analytic signal
  * band envelope: 25-100 Hz band-pass magnitude, smoothed
  * power envelope: mean short-time spectral power in the 40-60 Hz band

The 8 Hz smoothing filter is a first-order Butterworth applied forward and
backward (zero phase), so all envelopes stay time-aligned with the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt, hilbert

from .dataset import resample
from .errors import DataError

OBSERVATION_RATE = 50
LOG_EPSILON = 1e-8
SMOOTH_CUTOFF_HZ = 8.0
BAND_LOW_HZ = 25.0
BAND_HIGH_HZ = 100.0
PSD_BAND_HZ = (40.0, 60.0)
PSD_WINDOW_S = 0.050
PSD_HOP_S = 0.020


@dataclass
class ObservationSequence:
    """T x 4 matrix of z-scored envelope observations at 50 Hz."""

    values: np.ndarray
    rate: int = OBSERVATION_RATE
    recording_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != 4:
            raise DataError("observations must be a T x 4 matrix")
        if not np.all(np.isfinite(self.values)):
            raise DataError("observations contain non-finite values")

    def __len__(self):
        return self.values.shape[0]


def _smooth(x, rate):
    b, a = butter(1, SMOOTH_CUTOFF_HZ, btype="lowpass", fs=rate)
    return filtfilt(b, a, x)


def homomorphic_envelope(samples, rate):
    """exp(lowpass(log |analytic|)): multiplicative modulation made additive.

    A constant zero signal maps to the epsilon floor, and scaling the input
    scales the envelope by the same factor (up to the floor term).
    """
    samples = np.asarray(samples, dtype=np.float64)
    amplitude = np.abs(hilbert(samples))
    return np.exp(_smooth(np.log(amplitude + LOG_EPSILON), rate))


def hilbert_envelope(samples):
    """Instantaneous amplitude: magnitude of the FFT analytic signal."""
    return np.abs(hilbert(np.asarray(samples, dtype=np.float64)))


def wavelet_envelope(samples, rate):
    """Band-limited envelope for the 25-100 Hz range where S1/S2 live.

    One band-pass decomposition level stands in for a full wavelet analysis:
    the signal is band-passed, rectified, and smoothed with the same 8 Hz
    zero-phase low-pass used by the homomorphic envelope.
    """
    samples = np.asarray(samples, dtype=np.float64)
    b, a = butter(2, [BAND_LOW_HZ, BAND_HIGH_HZ], btype="bandpass", fs=rate)
    band = filtfilt(b, a, samples)
    # the smoothing kernel is non-negative, but reflected edge padding can
    # undershoot, so clamp
    return np.maximum(_smooth(np.abs(band), rate), 0.0)


def psd_envelope(samples, rate):
    """Mean spectral power in 40-60 Hz over 50 ms Hamming frames, 20 ms hop,
    linearly interpolated back to the input time base."""
    samples = np.asarray(samples, dtype=np.float64)
    win = int(round(PSD_WINDOW_S * rate))
    hop = int(round(PSD_HOP_S * rate))
    n = samples.size
    if n < win:
        raise DataError("signal shorter than one psd window")
    n_frames = (n - win) // hop + 1
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = samples[idx] * np.hamming(win)
    spectra = np.fft.rfft(frames, axis=1)
    freqs = np.fft.rfftfreq(win, d=1.0 / rate)
    band = (freqs >= PSD_BAND_HZ[0]) & (freqs <= PSD_BAND_HZ[1])
    power = (np.abs(spectra[:, band]) ** 2 / win).mean(axis=1)
    centers = (hop * np.arange(n_frames) + (win - 1) / 2.0) / rate
    t = np.arange(n) / rate
    return np.interp(t, centers, power)


def build_observations(rec, obs_rate=OBSERVATION_RATE):
    """Compute the four envelopes, downsample to obs_rate, z-score per column.

    Constant columns become all zeros instead of dividing by a zero standard
    deviation. Requires at least one second of audio.
    """
    if rec.duration < 1.0:
        raise DataError("recording %s shorter than 1 s" % rec.recording_id)
    envelopes = [
        homomorphic_envelope(rec.samples, rec.rate),
        hilbert_envelope(rec.samples),
        wavelet_envelope(rec.samples, rec.rate),
        psd_envelope(rec.samples, rec.rate),
    ]
    columns = [resample(env, rec.rate, obs_rate) for env in envelopes]
    values = np.column_stack(columns)
    mean = values.mean(axis=0)
    std = values.std(axis=0)
    centered = values - mean
    scaled = np.where(std > 1e-12, centered / np.where(std > 1e-12, std, 1.0), 0.0)
    return ObservationSequence(scaled, obs_rate, rec.recording_id)


def write_envelope_table(path, obs):
    """Dump observations as tabular text (t_seconds, hom, hil, wav, psd)."""
    with open(path, "w") as fh:
        fh.write("t_seconds,homomorphic,hilbert,wavelet,psd\n")
        for t, row in enumerate(obs.values):
            fh.write("%.6f,%s\n" % (t / obs.rate, ",".join("%.9g" % v for v in row)))


def read_envelope_table(path):
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("t_seconds"):
            raise DataError("%s: missing envelope table header" % path)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) == 5:
                rows.append([float(p) for p in parts[1:]])
    return np.asarray(rows, dtype=np.float64)
