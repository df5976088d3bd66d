"""WFDB record parsing (format 212 only) and the ECGREC1 hand-off container."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ecgnet import kernels
from ecgnet.errors import (
    BadContainer,
    MalformedAnnotationLine,
    MalformedHeader,
    TruncatedFile,
    UnsortedAnnotations,
    UnsupportedFormat,
    ValueOutOfRange,
)

SUPPORTED_FORMAT = 212
RECORD_MAGIC = b"ECGREC1\0"
# WFDB treats a zero gain as "uncalibrated" and uses this default
DEFAULT_GAIN = 200.0


@dataclass(frozen=True)
class ChannelInfo:
    name: str
    file_name: str
    adc_gain: float
    adc_zero: int
    format_code: int


@dataclass(frozen=True)
class RecordHeader:
    record_id: str
    n_signals: int
    fs: float
    n_samples: int
    channels: tuple[ChannelInfo, ...] = ()

    def channel_index(self, name):
        """Index of the channel called ``name``; integers pass through."""
        if isinstance(name, int):
            return name
        for i, ch in enumerate(self.channels):
            if ch.name == name:
                return i
        raise MalformedHeader(f"record {self.record_id} has no channel {name!r}")


@dataclass
class SignalRecord:
    record_id: str
    channel_name: str
    fs: float
    samples: np.ndarray
    preprocessed: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self):
        return self.samples.shape[0]


@dataclass(frozen=True, order=True)
class Annotation:
    sample_index: int
    symbol: str = field(compare=False)


def _parse_number(token, what):
    try:
        return float(token)
    except ValueError:
        raise MalformedHeader(f"non-numeric {what}: {token!r}") from None


def parse_header(text):
    """Parse a WFDB header into a :class:`RecordHeader`.

    Only the record line and one line per signal are read; comment lines
    (``#``) and trailing fields such as base time/date are ignored.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MalformedHeader("empty header")
    rec = lines[0].split()
    if len(rec) < 4:
        raise MalformedHeader(f"record line needs 4 fields, got {len(rec)}: {lines[0]!r}")
    record_id = rec[0].split("/")[0]
    try:
        n_signals = int(rec[1])
        n_samples = int(rec[3])
    except ValueError:
        raise MalformedHeader(f"bad record line: {lines[0]!r}") from None
    # "360/..." carries a counter frequency after the slash
    fs = _parse_number(rec[2].split("/")[0], "sampling frequency")
    if n_signals < 1 or fs <= 0 or n_samples < 0:
        raise MalformedHeader(f"bad record line: {lines[0]!r}")
    if len(lines) - 1 < n_signals:
        raise MalformedHeader(f"expected {n_signals} signal lines, got {len(lines) - 1}")

    channels = []
    for i, line in enumerate(lines[1 : 1 + n_signals]):
        f = line.split()
        if len(f) < 3:
            raise MalformedHeader(f"signal line needs at least 3 fields: {line!r}")
        fmt_token = f[1].split("x")[0].split(":")[0].split("+")[0]
        try:
            fmt = int(fmt_token)
        except ValueError:
            raise MalformedHeader(f"bad format field: {f[1]!r}") from None
        if fmt != SUPPORTED_FORMAT:
            raise UnsupportedFormat(f"format {fmt} is not supported (only 212)")
        gain_token = f[2]
        baseline = None
        if "(" in gain_token:
            gain_part, rest = gain_token.split("(", 1)
            baseline = int(_parse_number(rest.split(")")[0], "baseline"))
        else:
            gain_part = gain_token
        gain = _parse_number(gain_part.split("/")[0], "adc gain")
        if gain == 0:
            gain = DEFAULT_GAIN
        if gain < 0:
            raise MalformedHeader(f"negative adc gain in {line!r}")
        adc_zero = int(_parse_number(f[4], "adc zero")) if len(f) > 4 else 0
        if baseline is None:
            baseline = adc_zero
        name = " ".join(f[8:]) if len(f) > 8 else f"ch{i}"
        channels.append(ChannelInfo(name, f[0], gain, baseline, fmt))

    return RecordHeader(record_id, n_signals, fs, n_samples, tuple(channels))


def decode_format212(data, n_samples):
    """Unpack ``n_samples`` interleaved sample pairs from format-212 bytes."""
    data = bytes(data)
    need = 3 * n_samples
    if len(data) < need:
        raise TruncatedFile(f"format 212 needs {need} bytes for {n_samples} samples, got {len(data)}")
    if n_samples == 0:
        return np.zeros(0, np.int16), np.zeros(0, np.int16)
    return kernels.decode_212(data[:need], n_samples)


def encode_format212(ch0, ch1):
    a = np.asarray(ch0, dtype=np.int64)
    b = np.asarray(ch1, dtype=np.int64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueOutOfRange("channels must be 1-D and of equal length")
    for ch in (a, b):
        if ch.size and (ch.min() < -2048 or ch.max() > 2047):
            raise ValueOutOfRange("format 212 holds 12-bit values in [-2048, 2047]")
    if a.size == 0:
        return b""
    return kernels.encode_212(a, b)


def to_millivolts(raw, channel):
    return (np.asarray(raw, dtype=np.float64) - channel.adc_zero) / channel.adc_gain


def from_millivolts(mv, channel):
    return np.rint(np.asarray(mv) * channel.adc_gain + channel.adc_zero).astype(np.int64)


def parse_annotations(text):
    """Parse an rdann-style text export into sorted annotations.

    The symbol is the first single-character, non-numeric field whose
    preceding field is an integer; that integer is the sample index.
    Column-header lines starting with ``Time`` are skipped.
    """
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        fields = line.split()
        if not fields or fields[0].startswith("#") or fields[0] == "Time":
            continue
        ann = None
        for i in range(1, len(fields)):
            sym, prev = fields[i], fields[i - 1]
            if len(sym) == 1 and not sym.isdigit() and prev.lstrip("-").isdigit():
                ann = Annotation(int(prev), sym)
                break
        if ann is None or ann.sample_index < 0:
            raise MalformedAnnotationLine(f"line {lineno}: {line!r}")
        if out and ann.sample_index < out[-1].sample_index:
            raise UnsortedAnnotations(
                f"line {lineno}: index {ann.sample_index} after {out[-1].sample_index}"
            )
        out.append(ann)
    return out


def format_annotations(annotations):
    """Write annotations in the minimal ``sample symbol`` text layout."""
    return "".join(f"{a.sample_index} {a.symbol}\n" for a in annotations)


def read_wfdb_record(header_path, channel=0, annotation_path=None):
    """Read one channel of a format-212 record from disk, in millivolts.

    Returns ``(header, record, annotations)``; annotations are empty when
    no annotation file is given.
    """
    header_path = Path(header_path)
    header = parse_header(header_path.read_text())
    idx = header.channel_index(channel)
    if not 0 <= idx < header.n_signals:
        raise MalformedHeader(f"channel {channel} out of range")
    if header.n_signals != 2:
        raise UnsupportedFormat("only two-channel format 212 records are supported")
    ch = header.channels[idx]
    dat = header_path.parent / ch.file_name
    try:
        payload = dat.read_bytes()
    except FileNotFoundError:
        raise TruncatedFile(f"signal file {dat} not found") from None
    pair = decode_format212(payload, header.n_samples)
    record = SignalRecord(header.record_id, ch.name, header.fs, to_millivolts(pair[idx], ch))
    anns = []
    if annotation_path is not None:
        anns = parse_annotations(Path(annotation_path).read_text())
        if anns and anns[-1].sample_index >= header.n_samples:
            raise MalformedAnnotationLine(
                f"annotation index {anns[-1].sample_index} beyond record length {header.n_samples}"
            )
    return header, record, anns


def write_record(path, record):
    """Write the ECGREC1 container: magic, fs (f64), n (u64), n float32 samples."""
    samples = np.asarray(record.samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(RECORD_MAGIC)
        fh.write(struct.pack("<dQ", float(record.fs), samples.shape[0]))
        fh.write(samples.tobytes())


def read_record(path, record_id=None, channel_name="", preprocessed=False):
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != RECORD_MAGIC:
        raise BadContainer(f"{path}: not an ECGREC1 file")
    if len(blob) < 24:
        raise BadContainer(f"{path}: truncated header")
    fs, n = struct.unpack_from("<dQ", blob, 8)
    if len(blob) < 24 + 4 * n:
        raise BadContainer(f"{path}: expected {n} samples")
    samples = np.frombuffer(blob, dtype="<f4", count=n, offset=24).astype(np.float64)
    rid = record_id if record_id is not None else path.name.split(".")[0]
    return SignalRecord(rid, channel_name, fs, samples, preprocessed)
