"""Per-position activation maps and their un-pooled reconstruction."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ecgnet.errors import UnknownLayerTag, WrongBinCount

LAYER_TAGS = ("trunk_last_conv", "gru")


@dataclass
class ActivationMap:
    layer_tag: str
    bins: np.ndarray
    reconstructed: np.ndarray
    source: str = ""


def unpool_reconstruct(bins, length=1800, n_bins=None):
    """Piecewise-constant expansion of ``bins`` onto ``length`` samples.

    Each bin covers ``length // n_bins`` samples; the last bin also
    absorbs the remainder (28 bins over 1800 samples: 27 x 64 + 72).
    """
    bins = np.asarray(bins, dtype=np.float64)
    if bins.ndim != 1 or bins.size == 0 or (n_bins is not None and bins.size != n_bins):
        raise WrongBinCount(f"expected {n_bins} bins, got {bins.shape}")
    span = length // bins.size
    if span < 1:
        raise WrongBinCount(f"{bins.size} bins do not fit {length} samples")
    reps = np.full(bins.size, span)
    reps[-1] += length - span * bins.size
    return np.repeat(bins, reps)


def bins_from_taps(taps, layer_tag):
    """Per-timestep activation sums for every row of a tapped batch."""
    if layer_tag == "trunk_last_conv":
        return taps["trunk"].sum(axis=2)
    if layer_tag == "gru":
        return taps["attention"] * np.abs(taps["gru_states"]).sum(axis=2)
    raise UnknownLayerTag(f"unknown layer tag {layer_tag!r}; expected one of {LAYER_TAGS}")


def activation_map(model, segment, layer_tag, source=""):
    """Activation map of one segment (samples array or Segment) in infer mode."""
    if layer_tag not in LAYER_TAGS:
        raise UnknownLayerTag(f"unknown layer tag {layer_tag!r}; expected one of {LAYER_TAGS}")
    samples = getattr(segment, "samples", segment)
    if not source and hasattr(segment, "source_record"):
        source = f"{segment.source_record}:{segment.start_index}"
    taps = {}
    model.forward(np.asarray(samples)[None], mode="infer", taps=taps)
    bins = bins_from_taps(taps, layer_tag)[0].astype(np.float64)
    recon = unpool_reconstruct(bins, model.spec.input_length, model.spec.gru_seq_len)
    return ActivationMap(layer_tag, bins, recon, source)


def _max_normalized(x):
    peak = np.max(np.abs(x))
    return x / peak if peak > 0 else x


def write_activation_csv(path, signal, trunk_map, gru_map, normalized=False):
    """Three rows (signal, trunk map, GRU map); two more max-normalized rows if asked."""
    rows = [("signal", signal), (trunk_map.layer_tag, trunk_map.reconstructed),
            (gru_map.layer_tag, gru_map.reconstructed)]
    if normalized:
        rows += [(trunk_map.layer_tag + "_norm", _max_normalized(trunk_map.reconstructed)),
                 (gru_map.layer_tag + "_norm", _max_normalized(gru_map.reconstructed))]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for name, values in rows:
            w.writerow([name, *(repr(float(v)) for v in values)])
