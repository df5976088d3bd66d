"""Synthetic ECG-like data for tests, benchmarks and demo runs.

Nothing here resembles a physiological model; the signals only need
beat-like morphology, baseline drift and labelled annotations.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ecgnet.record_io import Annotation, encode_format212
from ecgnet.segmentation import N_CLASSES, SegmentSet

# (width in seconds, amplitude in mV, RR factor) per beat symbol
_BEAT_SHAPES = {
    "N": (0.012, 1.0, 1.0),
    "V": (0.035, -1.4, 0.8),
    "A": (0.012, 0.9, 0.7),
    "F": (0.024, 0.2, 0.9),
    "Q": (0.018, 0.6, 1.0),
}


def synthetic_ecg(seconds, fs, symbols="NNNNVNNANNNF", rr=0.8, seed=0, drift=0.3):
    """Return ``(signal_mv, annotations)`` with one Gaussian beat per symbol, cycling."""
    rng = np.random.default_rng(seed)
    n = int(round(seconds * fs))
    t = np.arange(n) / fs
    signal = drift * np.sin(2 * np.pi * 0.3 * t) + 0.02 * rng.standard_normal(n)
    anns = []
    pos, k = 0.25, 0
    while pos < seconds - 0.05:
        sym = symbols[k % len(symbols)]
        width, amp, rr_factor = _BEAT_SHAPES.get(sym, _BEAT_SHAPES["N"])
        signal += amp * np.exp(-0.5 * ((t - pos) / width) ** 2)
        idx = int(round(pos * fs))
        if idx < n:
            anns.append(Annotation(idx, sym))
        pos += rr * rr_factor * (1 + 0.05 * rng.standard_normal())
        k += 1
    return signal, anns


def write_wfdb_record(directory, record_id, fs, ch0_mv, ch1_mv, annotations,
                      names=("MLII", "V1"), gain=200.0, adc_zero=1024):
    """Write ``<id>.hea``, ``<id>.dat`` (format 212) and ``<id>.txt`` annotations."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    raw = [np.clip(np.rint(np.asarray(ch) * gain + adc_zero), -2048, 2047).astype(np.int64)
           for ch in (ch0_mv, ch1_mv)]
    n = raw[0].shape[0]
    (directory / f"{record_id}.dat").write_bytes(encode_format212(raw[0], raw[1]))
    lines = [f"{record_id} 2 {fs:g} {n}"]
    for ch, name in zip(raw, names):
        lines.append(f"{record_id}.dat 212 {gain:g} 11 {adc_zero} {int(ch[0]) if n else 0} 0 0 {name}")
    (directory / f"{record_id}.hea").write_text("\n".join(lines) + "\n")
    ann_lines = ["      Time   Sample #  Type  Sub Chan  Num\tAux"]
    for a in annotations:
        secs = a.sample_index / fs
        ann_lines.append(f"{int(secs // 60)}:{secs % 60:06.3f} {a.sample_index:>9}     {a.symbol}    0    0    0")
    (directory / f"{record_id}.txt").write_text("\n".join(ann_lines) + "\n")


def write_database(directory, record_ids, fs, seconds=40.0, seed=0, names=("MLII", "V1")):
    """A small two-channel database; each record gets its own beat mix."""
    mixes = ("NNNNVNNANNNF", "NNANNANNVNNQ", "NNNVVNNNANNN", "NNNNNNAANNVF")
    for i, rid in enumerate(record_ids):
        sig, anns = synthetic_ecg(seconds, fs, mixes[i % len(mixes)], seed=seed + i)
        write_wfdb_record(directory, rid, fs, sig, 0.5 * sig, anns, names)


def separable_segments(n=200, length=64, seed=0, noise=0.3):
    """Five easily separable classes: one sinusoid frequency per class, random phase."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % N_CLASSES
    t = np.arange(length) / length
    phase = rng.uniform(0, 2 * np.pi, size=(n, 1))
    freq = (labels + 1)[:, None]
    samples = np.sin(2 * np.pi * freq * t + phase) + noise * rng.standard_normal((n, length))
    samples = (samples - samples.mean()) / samples.std()
    return SegmentSet(samples.astype(np.float64), labels, np.full(n, "syn"), np.arange(n), "synthetic")
