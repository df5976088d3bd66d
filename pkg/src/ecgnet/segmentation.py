"""AAMI labelling, 10-second segmentation and dataset assembly."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ecgnet import dsp
from ecgnet.errors import BadContainer, EmptyWindow, MissingRecord, PipelineOrderError

N_CLASSES = 5
SEGMENT_SECONDS = 10.0
SEGMENT_MAGIC = b"ECGSEG1\0"


class AamiClass(enum.IntEnum):
    N = 0
    SVEB = 1
    VEB = 2
    F = 3
    Q = 4


AAMI_SYMBOLS = {
    AamiClass.N: "NLRej",
    AamiClass.SVEB: "AaJS",
    AamiClass.VEB: "VE",
    AamiClass.F: "F",
    AamiClass.Q: "/fQ",
}
_SYMBOL_TO_CLASS = {s: c for c, syms in AAMI_SYMBOLS.items() for s in syms}

# used only to break ties between equally frequent abnormal classes
SEVERITY_ORDER = (AamiClass.VEB, AamiClass.SVEB, AamiClass.F, AamiClass.Q)

DS1 = (
    "101", "106", "108", "109", "112", "114", "115", "116", "118", "119", "122",
    "124", "201", "203", "205", "207", "208", "209", "215", "220", "223", "230",
)
DST1 = (
    "100", "103", "105", "111", "113", "117", "121", "123", "200", "202", "210",
    "212", "213", "214", "219", "221", "222", "228", "231", "232", "233", "234",
)
PACED_RECORDS = ("102", "104", "107", "217")

TRAIN_SPLITS = {"DS1", "DS2"}
TEST_SPLITS = {"DST1", "DST2"}


def map_to_aami(symbol):
    """AAMI class for a MIT-BIH beat symbol, or ``None`` for non-beat marks."""
    return _SYMBOL_TO_CLASS.get(symbol)


def one_hot(labels, n_classes=N_CLASSES):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], n_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def label_segment(window_classes):
    """Label a window from the AAMI classes of the beats inside it.

    Accepts either an iterable of classes or a length-5 count vector.
    Normal beats only count when no other class is present; among the
    rest the most frequent wins, ties going to the more severe class.
    """
    counts = _as_counts(window_classes)
    if counts.sum() == 0:
        raise EmptyWindow("window contains no beat annotations")
    if counts[1:].sum() == 0:
        return AamiClass.N
    best = max(counts[1:])
    for cls in SEVERITY_ORDER:
        if counts[cls] == best:
            return cls
    raise AssertionError("unreachable")


def _as_counts(window_classes):
    if isinstance(window_classes, np.ndarray) and window_classes.shape == (N_CLASSES,):
        return window_classes.astype(np.int64)
    counts = np.zeros(N_CLASSES, dtype=np.int64)
    for c in window_classes:
        counts[int(c)] += 1
    return counts


@dataclass(frozen=True)
class Segment:
    samples: np.ndarray
    label: AamiClass
    source_record: str
    start_index: int

    @property
    def one_hot(self):
        return one_hot([self.label])[0]


@dataclass
class SegmentSet:
    """A column-oriented collection of labelled segments.

    ``role`` is the provenance tag checked by training: ``"test"`` sets
    are refused unless a recipe explicitly re-tags them.
    """

    samples: np.ndarray
    labels: np.ndarray
    record_ids: np.ndarray
    start_index: np.ndarray
    split: str = ""
    role: str = "train"
    window_counts: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.size == 0 and self.samples.ndim != 2:
            self.samples = self.samples.reshape(0, 0)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.record_ids = np.asarray(self.record_ids, dtype=str)
        self.start_index = np.asarray(self.start_index, dtype=np.int64)

    def __len__(self):
        return self.labels.shape[0]

    def __getitem__(self, i):
        return Segment(self.samples[i], AamiClass(int(self.labels[i])),
                       str(self.record_ids[i]), int(self.start_index[i]))

    @property
    def segment_length(self):
        return self.samples.shape[1] if self.samples.ndim == 2 else 0

    @property
    def one_hot(self):
        return one_hot(self.labels)

    def class_counts(self):
        return np.bincount(self.labels, minlength=N_CLASSES).astype(np.int64)

    def keys(self):
        """Identity tags ``record:start`` (unique within a dataset)."""
        return [f"{r}:{s}" for r, s in zip(self.record_ids, self.start_index)]

    def take(self, idx, **changes):
        idx = np.asarray(idx, dtype=np.int64)
        wc = None if self.window_counts is None else self.window_counts[idx]
        return replace(self, samples=self.samples[idx], labels=self.labels[idx],
                       record_ids=self.record_ids[idx], start_index=self.start_index[idx],
                       window_counts=wc, **changes)

    def replace(self, **changes):
        return replace(self, **changes)

    @classmethod
    def empty(cls, segment_length=0, split="", role="train"):
        return cls(np.zeros((0, segment_length), np.float32), [], [], [], split, role,
                   np.zeros((0, N_CLASSES), np.int64))

    @classmethod
    def concat(cls, sets, split="", role=None):
        sets = list(sets)
        if not sets:
            return cls.empty(split=split, role=role or "train")
        if role is None:
            role = "test" if any(s.role == "test" for s in sets) else "train"
        wcs = [s.window_counts for s in sets]
        wc = None if any(w is None for w in wcs) else np.concatenate(wcs)
        return cls(
            np.concatenate([s.samples for s in sets]),
            np.concatenate([s.labels for s in sets]),
            np.concatenate([s.record_ids for s in sets]),
            np.concatenate([s.start_index for s in sets]),
            split, role, wc,
        )


@dataclass
class RecordStore:
    """A preprocessed record with its annotations at the original rate."""

    record: object
    annotations: list
    fs_orig: float


def rescale_index(index, fs_orig, fs_new):
    return np.floor(np.asarray(index, dtype=np.float64) * fs_new / fs_orig + 0.5).astype(np.int64)


def build_segments(record, annotations, fs_orig, seconds=SEGMENT_SECONDS):
    """Cut one window per beat annotation, starting at the beat.

    Beat indexes are rescaled from ``fs_orig`` to the record's rate; a
    window is kept only if it lies fully inside the record. Each window
    is labelled from the AAMI classes of all beats falling inside it.
    """
    if not record.preprocessed:
        raise PipelineOrderError(f"record {record.record_id} must be preprocessed before segmentation")
    length = dsp.round_half_up(seconds * record.fs)
    beats = [(a.sample_index, map_to_aami(a.symbol)) for a in annotations]
    beats = [(i, c) for i, c in beats if c is not None]
    n = len(record)
    if not beats or n < length:
        return SegmentSet.empty(length)

    pos = rescale_index([i for i, _ in beats], fs_orig, record.fs)
    cls = np.array([int(c) for _, c in beats], dtype=np.int64)
    keep = pos + length <= n
    starts = pos[keep]
    if starts.size == 0:
        return SegmentSet.empty(length)

    # per-class cumulative beat counts, queried at window bounds
    cum = np.zeros((pos.shape[0] + 1, N_CLASSES), dtype=np.int64)
    cum[1:] = np.cumsum(one_hot(cls).astype(np.int64), axis=0)
    lo = np.searchsorted(pos, starts, side="left")
    hi = np.searchsorted(pos, starts + length, side="left")
    counts = cum[hi] - cum[lo]
    labels = np.array([label_segment(c) for c in counts], dtype=np.uint8)

    signal = np.asarray(record.samples, dtype=np.float32)
    windows = np.lib.stride_tricks.sliding_window_view(signal, length)[starts]
    return SegmentSet(np.ascontiguousarray(windows), labels,
                      np.full(starts.shape[0], record.record_id), starts,
                      window_counts=counts)


def svdb_split(record_ids):
    """Split records by even/odd position in sorted id order: (train, test)."""
    ids = sorted(record_ids)
    return tuple(ids[0::2]), tuple(ids[1::2])


def split_records(split_name, available=(), overrides=None):
    """Record ids belonging to a named split.

    ``overrides`` maps split names to explicit id lists and wins over the
    built-in tables; svdb splits otherwise come from ``available``.
    """
    if overrides and split_name in overrides:
        return tuple(str(r) for r in overrides[split_name])
    if split_name == "DS1":
        return DS1
    if split_name == "DST1":
        return DST1
    if split_name in ("DS2", "DST2"):
        train, test = svdb_split(available)
        return train if split_name == "DS2" else test
    raise MissingRecord(f"unknown split {split_name!r}")


@dataclass
class DatasetSplit:
    name: str
    record_ids: tuple
    segments: SegmentSet
    mean: float = 0.0
    std: float = 1.0

    @property
    def class_counts(self):
        return self.segments.class_counts()


def build_dataset(split_name, stores, record_ids=None, standardize=True, seconds=SEGMENT_SECONDS):
    """Assemble the segments of every record in a split.

    ``stores`` maps record id to :class:`RecordStore`. When ``record_ids``
    is omitted the split's built-in list is used (svdb splits are derived
    from the ids present in ``stores``).
    """
    if record_ids is None:
        record_ids = split_records(split_name, available=stores.keys())
    record_ids = tuple(str(r) for r in record_ids)
    missing = [r for r in record_ids if r not in stores]
    if missing:
        raise MissingRecord(f"split {split_name}: missing records {', '.join(missing)}")
    parts = [build_segments(stores[r].record, stores[r].annotations, stores[r].fs_orig, seconds)
             for r in record_ids]
    role = "test" if split_name in TEST_SPLITS else "train"
    segs = SegmentSet.concat(parts, split=split_name, role=role)
    mean, std = 0.0, 1.0
    if standardize and len(segs):
        segs, mean, std = dsp.standardize(segs)
    return DatasetSplit(split_name, record_ids, segs, mean, std)


def balanced_sample(sets, targets, seed, split="sampled"):
    """Draw up to ``targets[c]`` segments of each class without replacement.

    Classes whose supply is smaller than their target are taken whole;
    the other classes still fill their own targets. The result is
    shuffled with the same generator.
    """
    if isinstance(sets, SegmentSet):
        sets = [sets]
    pool = SegmentSet.concat(sets, split=split)
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(pool.labels == c)
        take = min(int(targets[c]), idx.shape[0])
        if take > 0:
            chosen.append(rng.choice(idx, size=take, replace=False))
    if not chosen:
        return SegmentSet.empty(pool.segment_length, split=split, role=pool.role)
    picked = np.concatenate(chosen)
    picked = picked[rng.permutation(picked.shape[0])]
    return pool.take(picked, split=split)


_ROLE_CODES = {"train": 0, "test": 1, "": 2}
_ROLE_NAMES = {v: k for k, v in _ROLE_CODES.items()}


def write_segments(path, segs):
    """Write an ECGSEG1 store.

    Layout (little endian): magic, u64 count, u32 sample_len, u32
    class_count, u16-prefixed split tag, u8 role; then per segment
    sample_len float32 values, u8 label, u16-prefixed record id, i64 start.
    """
    n, length = len(segs), segs.segment_length
    tag = segs.split.encode()
    samples = np.asarray(segs.samples, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(SEGMENT_MAGIC)
        fh.write(struct.pack("<QII", n, length, N_CLASSES))
        fh.write(struct.pack("<H", len(tag)) + tag)
        fh.write(struct.pack("<B", _ROLE_CODES.get(segs.role, 2)))
        for i in range(n):
            rid = str(segs.record_ids[i]).encode()
            fh.write(samples[i].tobytes())
            fh.write(struct.pack("<BH", int(segs.labels[i]), len(rid)))
            fh.write(rid)
            fh.write(struct.pack("<q", int(segs.start_index[i])))


def read_segments(path):
    path = Path(path)
    blob = path.read_bytes()
    if blob[:8] != SEGMENT_MAGIC:
        raise BadContainer(f"{path}: not an ECGSEG1 file")
    try:
        n, length, n_classes = struct.unpack_from("<QII", blob, 8)
        off = 24
        (tag_len,) = struct.unpack_from("<H", blob, off)
        split = blob[off + 2 : off + 2 + tag_len].decode()
        off += 2 + tag_len
        (role_code,) = struct.unpack_from("<B", blob, off)
        off += 1
        samples = np.empty((n, length), dtype=np.float32)
        labels = np.empty(n, dtype=np.uint8)
        starts = np.empty(n, dtype=np.int64)
        rids = []
        for i in range(n):
            samples[i] = np.frombuffer(blob, dtype="<f4", count=length, offset=off)
            off += 4 * length
            labels[i], rid_len = struct.unpack_from("<BH", blob, off)
            off += 3
            rids.append(blob[off : off + rid_len].decode())
            off += rid_len
            (starts[i],) = struct.unpack_from("<q", blob, off)
            off += 8
    except struct.error:
        raise BadContainer(f"{path}: truncated segment store") from None
    if n_classes != N_CLASSES or (n and labels.max() >= N_CLASSES):
        raise BadContainer(f"{path}: bad class count")
    return SegmentSet(samples, labels, rids, starts, split, _ROLE_NAMES.get(role_code, ""))
