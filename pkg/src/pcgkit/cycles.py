"""Cut segmented recordings into fixed-cycle-count audio windows."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dataset import Label
from .errors import DataError

log = logging.getLogger(__name__)


@dataclass
class CycleSegment:
    """A window of audio spanning a whole number of heart cycles."""

    recording_id: str
    segment_id: str
    samples: np.ndarray
    rate: int
    start_time: float
    end_time: float
    n_cycles: int
    label: Label = Label.UNLABELED


def extract_cycles(rec, seq, n_cycles, stride_cycles=None):
    """Slice windows of n_cycles consecutive heart cycles from a recording.

    Each window starts at an S1 onset and ends at the sample before the
    n_cycles-th subsequent onset, so windows taken at stride_cycles ==
    n_cycles tile the spanned audio exactly. Returns an empty list (with a
    warning) when the recording holds fewer than n_cycles complete cycles.
    """
    if n_cycles < 1:
        raise DataError("n_cycles must be at least 1")
    stride = n_cycles if stride_cycles is None else int(stride_cycles)
    if stride < 1:
        raise DataError("stride_cycles must be at least 1")
    onsets = seq.onset_samples(rec.rate)
    onsets = onsets[onsets <= rec.samples.size]
    m = onsets.size
    if m < n_cycles + 1:
        log.warning("recording %s: only %d S1 onsets, need %d for one segment",
                    rec.recording_id, m, n_cycles + 1)
        return []
    segments = []
    count = (m - 1 - n_cycles) // stride + 1
    for k in range(count):
        i = k * stride
        a, b = int(onsets[i]), int(onsets[i + n_cycles])
        segments.append(CycleSegment(
            recording_id=rec.recording_id,
            segment_id="%s:%03d" % (rec.recording_id, k),
            samples=rec.samples[a:b].copy(),
            rate=rec.rate,
            start_time=a / rec.rate,
            end_time=b / rec.rate,
            n_cycles=n_cycles,
            label=rec.label,
        ))
    return segments


def write_segment_index(path, segments):
    """CSV index of extracted segments (ids, times, cycle counts, labels)."""
    with open(path, "w") as fh:
        fh.write("segment_id,recording_id,start_seconds,end_seconds,n_cycles,label\n")
        for seg in segments:
            fh.write("%s,%s,%.6f,%.6f,%d,%d\n"
                     % (seg.segment_id, seg.recording_id, seg.start_time,
                        seg.end_time, seg.n_cycles, seg.label.value))
