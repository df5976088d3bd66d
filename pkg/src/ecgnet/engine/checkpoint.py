"""ECGWTS1 parameter checkpoints.

Layout (little endian)::

    magic "ECGWTS1\\0"
    u32 entry count
    per entry: u32 name length, name (utf-8), u32 rank, rank x u64 dims,
               float64 payload (C order)

Adam state is stored as extra entries ``<name>#adam_m``, ``<name>#adam_v``
and a rank-0 ``<name>#adam_step``.
"""

import struct
from pathlib import Path

import numpy as np

from ecgnet.errors import BadContainer, MissingCheckpoint

MAGIC = b"ECGWTS1\0"
ADAM_SUFFIXES = ("#adam_m", "#adam_v", "#adam_step")


def write_entries(path, entries):
    """Write an ordered mapping of name -> array."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(entries)))
        for name, arr in entries.items():
            arr = np.asarray(arr, dtype="<f8", order="C")
            raw = name.encode()
            fh.write(struct.pack("<I", len(raw)) + raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_entries(path):
    path = Path(path)
    if not path.is_file():
        raise MissingCheckpoint(f"checkpoint {path} not found")
    blob = path.read_bytes()
    if blob[:8] != MAGIC:
        raise BadContainer(f"{path}: not an ECGWTS1 checkpoint")
    entries = {}
    try:
        (count,) = struct.unpack_from("<I", blob, 8)
        off = 12
        for _ in range(count):
            (n,) = struct.unpack_from("<I", blob, off)
            name = blob[off + 4 : off + 4 + n].decode()
            off += 4 + n
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            shape = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            size = int(np.prod(shape, dtype=np.int64))
            if off + 8 * size > len(blob):
                raise struct.error
            entries[name] = np.frombuffer(blob, "<f8", size, off).reshape(shape).copy()
            off += 8 * size
    except struct.error:
        raise BadContainer(f"{path}: truncated checkpoint") from None
    return entries


def save_checkpoint(path, params, buffers=None, include_adam=False):
    """Save named parameters (and buffers such as batch-norm running stats)."""
    entries = {}
    for name, p in params.items():
        entries[name] = p.data
        if include_adam:
            entries[name + "#adam_m"] = p.adam_m
            entries[name + "#adam_v"] = p.adam_v
            entries[name + "#adam_step"] = np.asarray(float(p.step_count))
    for name, arr in (buffers or {}).items():
        entries[name] = arr
    write_entries(path, entries)


def load_checkpoint(path, params, buffers=None, strict=True):
    """Load values into ``params``/``buffers`` in place; return loaded names.

    With ``strict=False`` only names present on both sides are loaded,
    which lets a trunk checkpoint seed a different head configuration.
    """
    entries = read_entries(path)
    buffers = buffers if buffers is not None else {}
    targets = set(params) | set(buffers)
    stored = {k for k in entries if not k.endswith(ADAM_SUFFIXES)}
    if strict and stored != targets:
        missing = sorted(targets - stored)
        extra = sorted(stored - targets)
        raise BadContainer(f"checkpoint mismatch: missing {missing}, unexpected {extra}")
    loaded = []
    for name in sorted(stored & targets):
        value = entries[name]
        dest = params[name].data if name in params else buffers[name]
        if dest.shape != value.shape:
            raise BadContainer(f"{name}: shape {value.shape} != {dest.shape}")
        dest[...] = value
        if name in params and name + "#adam_m" in entries:
            p = params[name]
            p.adam_m[...] = entries[name + "#adam_m"]
            p.adam_v[...] = entries[name + "#adam_v"]
            p.step_count = int(entries[name + "#adam_step"])
        loaded.append(name)
    return loaded
