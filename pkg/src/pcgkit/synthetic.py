"""Synthetic phonocardiogram generator with known state boundaries.

Recordings are built cycle by cycle: a tone-burst S1, a systolic gap, a
tone-burst S2, and a diastolic gap, with small per-cycle timing jitter and a
per-recording background-noise level. Every recording carries one band-limited
(120-250 Hz) noise burst per cycle at a matched level, lasting as long as that
cycle's systole. Abnormal recordings place the burst across systole (a murmur);
normal recordings place it in early diastole, right after S2. Per-cycle burst
energy, bandwidth, and duration therefore coincide between the classes, so
order-free frame statistics overlap and only the burst's position within the
cycle separates normal from abnormal. Because the generator knows every state
boundary it provides ground truth for emission training and for segmentation
accuracy checks.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, filtfilt

from .dataset import Label, ManifestEntry, SignalRecording, write_wav
from .envelopes import OBSERVATION_RATE, build_observations
from .segmentation import (S1_MEAN_S, S2_MEAN_S, STATE_NAMES, HeartState,
                           write_state_intervals)

MURMUR_BAND_HZ = (120.0, 250.0)


@dataclass
class SyntheticRecording:
    recording: SignalRecording
    states: np.ndarray          # per-sample state indices at the audio rate
    s1_onsets: np.ndarray       # sample indices of complete S1 onsets
    bpm: float
    systole_fraction: float
    noise_level: float
    murmur_level: float


def _tone_burst(n, freq, rate, amp, phase):
    t = np.arange(n) / rate
    return amp * np.hanning(n) * np.sin(2.0 * np.pi * freq * t + phase)


def generate_recording(recording_id, abnormal, duration_s=11.0, rate=1000,
                       seed=0, bpm=None, systole_fraction=None,
                       noise_level=None, murmur_level=None, start_phase=None):
    """Generate one synthetic recording with per-sample state labels.

    start_phase=0.0 starts the recording exactly at an S1 onset; by default
    a random stretch of diastole leads in. The waveform is peak-normalized
    to 0.9 so relative (not absolute) levels carry the information.
    """
    rng = np.random.default_rng(seed)
    bpm = rng.uniform(60.0, 100.0) if bpm is None else float(bpm)
    frac = rng.uniform(0.30, 0.40) if systole_fraction is None else float(systole_fraction)
    noise = rng.uniform(0.01, 0.08) if noise_level is None else float(noise_level)
    murmur = rng.uniform(0.04, 0.09) if murmur_level is None else float(murmur_level)
    s1_freq = rng.uniform(40.0, 55.0)
    s2_freq = rng.uniform(55.0, 70.0)
    cycle_s = 60.0 / bpm
    s1_n = int(round(S1_MEAN_S * rate))
    s2_n = int(round(S2_MEAN_S * rate))
    sys_base = frac * cycle_s - S1_MEAN_S
    dia_base = cycle_s - frac * cycle_s - S2_MEAN_S
    if sys_base <= 0.02 or dia_base <= 0.02:
        raise ValueError("bpm %.0f with systole fraction %.2f leaves no room for "
                         "the intervals" % (bpm, frac))
    n = int(round(duration_s * rate))
    x = np.zeros(n)
    states = np.full(n, int(HeartState.DIASTOLE), dtype=np.int64)
    systole_mask = np.zeros(n, dtype=bool)
    early_dia_mask = np.zeros(n, dtype=bool)
    onsets = []
    if start_phase is None:
        pos = int(rng.uniform(0.0, dia_base) * rate)
    else:
        pos = int(round(float(start_phase) * cycle_s * rate))
    while pos < n:
        jitter = 1.0 + float(np.clip(rng.normal(0.0, 0.02), -0.06, 0.06))
        sys_n = int(round(sys_base * jitter * rate))
        dia_n = int(round(dia_base * jitter * rate))
        if pos + s1_n <= n:
            onsets.append(pos)
        end = min(pos + s1_n, n)
        states[pos:end] = HeartState.S1
        burst = _tone_burst(s1_n, s1_freq, rate,
                            0.75 * (1.0 + rng.normal(0.0, 0.05)),
                            rng.uniform(0.0, 2.0 * np.pi))
        x[pos:end] += burst[:end - pos]
        pos += s1_n
        end = min(pos + sys_n, n)
        states[pos:end] = HeartState.SYSTOLE
        systole_mask[pos:end] = True
        pos += sys_n
        if pos >= n:
            break
        end = min(pos + s2_n, n)
        states[pos:end] = HeartState.S2
        burst = _tone_burst(s2_n, s2_freq, rate,
                            0.55 * (1.0 + rng.normal(0.0, 0.05)),
                            rng.uniform(0.0, 2.0 * np.pi))
        x[pos:end] += burst[:end - pos]
        pos += s2_n
        states[pos:min(pos + dia_n, n)] = HeartState.DIASTOLE
        # matched burst slot: same length as this cycle's systole (dia_n is
        # always the longer interval for systole fractions <= 0.5)
        early_dia_mask[pos:min(pos + sys_n, n)] = True
        pos += dia_n
    burst_mask = systole_mask if abnormal else early_dia_mask
    if burst_mask.any():
        track = rng.standard_normal(n) * burst_mask
        b, a = butter(2, MURMUR_BAND_HZ, btype="bandpass", fs=rate)
        track = filtfilt(b, a, track)
        rms = np.sqrt(np.mean(track[burst_mask] ** 2))
        if rms > 0:
            x += track * (murmur / rms)
    x += noise * rng.standard_normal(n)
    x *= 0.9 / np.abs(x).max()
    label = Label.ABNORMAL if abnormal else Label.NORMAL
    rec = SignalRecording(recording_id, x, rate, label, "synthetic")
    return SyntheticRecording(rec, states, np.asarray(onsets, dtype=np.int64),
                              bpm, frac, noise, murmur)


def state_intervals_from_array(states, rate):
    """Contiguous runs of a per-sample state array as labeled intervals."""
    edges = np.flatnonzero(np.diff(states)) + 1
    bounds = np.concatenate([[0], edges, [states.size]])
    return [(bounds[i] / rate, bounds[i + 1] / rate, STATE_NAMES[states[bounds[i]]])
            for i in range(bounds.size - 1)]


def observation_labels(syn, n_steps, obs_rate=OBSERVATION_RATE):
    """Per-step state labels aligned with build_observations rows."""
    rate = syn.recording.rate
    centers = np.minimum(((np.arange(n_steps) + 0.5) * rate / obs_rate).astype(np.int64),
                         syn.states.size - 1)
    return syn.states[centers]


def generate_dataset(out_dir, n, seed=0, abnormal_fraction=0.5, duration_s=11.0,
                     rate=1000):
    """Write a synthetic dataset directory: WAVs, REFERENCE.csv, .states files.

    Returns the manifest entries. Everything is deterministic in `seed`.
    """
    os.makedirs(out_dir, exist_ok=True)
    root = np.random.SeedSequence(seed)
    label_rng = np.random.default_rng(root.spawn(1)[0])
    children = root.spawn(n + 1)[1:]
    n_abnormal = int(round(n * abnormal_fraction))
    flags = np.zeros(n, dtype=bool)
    flags[:n_abnormal] = True
    flags = flags[label_rng.permutation(n)]
    entries = []
    lines = []
    for i in range(n):
        rec_id = "syn%04d" % i
        syn = generate_recording(rec_id, bool(flags[i]), duration_s=duration_s,
                                 rate=rate, seed=children[i])
        wav_path = os.path.join(out_dir, rec_id + ".wav")
        write_wav(wav_path, syn.recording.samples, rate)
        write_state_intervals(os.path.join(out_dir, rec_id + ".states"),
                              state_intervals_from_array(syn.states, rate))
        lines.append("%s,%d" % (rec_id, syn.recording.label.value))
        entries.append(ManifestEntry(rec_id, wav_path, syn.recording.label, "synthetic"))
    with open(os.path.join(out_dir, "REFERENCE.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return entries


def build_emission_corpus(n=16, seed=20260101, duration_s=11.0):
    """In-memory labeled corpus for emission training (no files written)."""
    children = np.random.SeedSequence(seed).spawn(n)
    observations = []
    labels = []
    for i, child in enumerate(children):
        syn = generate_recording("emit%03d" % i, abnormal=(i % 2 == 1),
                                 duration_s=duration_s, seed=child)
        obs = build_observations(syn.recording)
        observations.append(obs)
        labels.append(observation_labels(syn, len(obs)))
    return observations, labels


_default_models = {}


def train_default_emission_model(seed=0):
    """Deterministic emission model trained on a synthetic labeled corpus.

    Used when a dataset ships no state annotations (for example real
    PhysioNet recordings). Cached per seed within the process.
    """
    if seed not in _default_models:
        from .segmentation import train_emission_lr
        observations, labels = build_emission_corpus(seed=20260101 + seed)
        _default_models[seed] = train_emission_lr(observations, labels)
    return _default_models[seed]
