"""Signal conditioning: baseline removal, smoothing, resampling, standardization.

The stages run in a fixed order (baseline -> moving average -> resample);
:func:`preprocess_record` is the only entry point that applies them to a
record, and it refuses records that were already preprocessed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ecgnet import kernels
from ecgnet.errors import (
    DegenerateVariance,
    EmptySignal,
    EvenWindow,
    InvalidValue,
    PipelineOrderError,
    WindowLargerThanSignal,
)
from ecgnet.record_io import SignalRecord


@dataclass(frozen=True)
class PreprocessConfig:
    baseline_window_short: float = 0.2
    baseline_window_long: float = 0.6
    smoothing_window: int = 7
    target_fs: float = 180.0

    def __post_init__(self):
        if not 0 < self.baseline_window_short < self.baseline_window_long:
            raise InvalidValue("baseline windows need 0 < short < long")
        if self.smoothing_window < 1 or self.smoothing_window % 2 == 0:
            raise InvalidValue("smoothing_window must be odd and >= 1")
        if self.target_fs <= 0:
            raise InvalidValue("target_fs must be positive")


def round_half_up(x):
    return int(math.floor(x + 0.5))


def odd_window(seconds, fs):
    """Window length in samples: round(seconds * fs), bumped to odd."""
    w = max(1, round_half_up(seconds * fs))
    return w if w % 2 else w + 1


def _check_window(n, window):
    if window < 1 or window % 2 == 0:
        raise EvenWindow(f"window must be odd and >= 1, got {window}")
    if window > n:
        raise WindowLargerThanSignal(f"window {window} exceeds signal length {n}")


def median_filter(signal, window):
    x = np.asarray(signal, dtype=np.float64)
    _check_window(x.shape[0], window)
    return kernels.median_filter(x, window)


def remove_baseline(signal, fs, short=0.2, long=0.6):
    """Subtract a two-pass (short, then long) running-median baseline."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot remove baseline from an empty signal")
    if fs <= 0:
        raise InvalidValue("fs must be positive")
    baseline = median_filter(median_filter(x, odd_window(short, fs)), odd_window(long, fs))
    return x - baseline


def moving_average(signal, window=7):
    """Centered uniform moving average with half-sample symmetric padding."""
    x = np.asarray(signal, dtype=np.float64)
    _check_window(x.shape[0], window)
    half = window // 2
    padded = np.pad(x, half, mode="symmetric")
    return np.convolve(padded, np.ones(window), mode="valid") / window


def resampled_length(n, fs_in, fs_out):
    return round_half_up(n * fs_out / fs_in)


def resample_linear(signal, fs_in, fs_out):
    """Linear interpolation onto the ``fs_out`` grid, held at the last sample."""
    x = np.asarray(signal, dtype=np.float64)
    if x.size == 0:
        raise EmptySignal("cannot resample an empty signal")
    if fs_in <= 0 or fs_out <= 0:
        raise InvalidValue("sampling rates must be positive")
    if fs_in == fs_out:
        return x.copy()
    m = resampled_length(x.shape[0], fs_in, fs_out)
    pos = np.arange(m, dtype=np.float64) * fs_in / fs_out
    return np.interp(pos, np.arange(x.shape[0], dtype=np.float64), x)


def preprocess_signal(signal, fs, config=PreprocessConfig()):
    x = remove_baseline(signal, fs, config.baseline_window_short, config.baseline_window_long)
    x = moving_average(x, config.smoothing_window)
    return resample_linear(x, fs, config.target_fs)


def preprocess_record(record: SignalRecord, config=PreprocessConfig()) -> SignalRecord:
    if record.preprocessed:
        raise PipelineOrderError(f"record {record.record_id} is already preprocessed")
    out = preprocess_signal(record.samples, record.fs, config)
    return SignalRecord(record.record_id, record.channel_name, config.target_fs, out, True)


def pooled_stats(samples):
    """Mean and population std over every value, accumulated in row chunks."""
    arr = np.asarray(samples)
    flat = arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr.reshape(1, -1)
    chunk = max(1, (1 << 22) // max(1, flat.shape[1]))
    total, count = 0.0, flat.size
    if count == 0:
        raise EmptySignal("no samples to standardize")
    for i in range(0, flat.shape[0], chunk):
        total += float(flat[i : i + chunk].sum(dtype=np.float64))
    mean = total / count
    sq = 0.0
    for i in range(0, flat.shape[0], chunk):
        d = flat[i : i + chunk].astype(np.float64) - mean
        sq += float(np.einsum("ij,ij->", d, d))
    return mean, math.sqrt(sq / count)


def standardize(segments):
    """Standardize a segment collection with its own pooled mean/std.

    Returns ``(segments, mean, std)``; the returned collection is a copy
    in the input's dtype.
    """
    mean, std = pooled_stats(segments.samples)
    # float summation leaves ~1e-16 relative noise on constant data
    if not std > 1e-12 * max(1.0, abs(mean)):
        raise DegenerateVariance("all samples are equal; cannot standardize")
    return apply_standardization(segments, mean, std), mean, std


def apply_standardization(segments, mean, std):
    data = segments.samples
    scaled = ((data.astype(np.float64) - mean) / std).astype(data.dtype, copy=False)
    return segments.replace(samples=scaled)
