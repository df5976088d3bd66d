"""File-level pipeline stages and the T1-T4 experiment recipes.

Each stage reads and writes the documented containers under one output
directory, so a recipe is just a sequence of stage calls and any stage
can be rerun on its own::

    out/raw/<db>/<id>.ecgrec, <id>.ann       ingest
    out/pre/<db>/<id>.ecgrec, <id>.ann, <id>.json   preprocess
    out/segments/<name>.ecgseg, <name>.stats.json   segment, sample
    out/models/<name>.ecgwts (+ .spec.json, .history.csv, .stats.json)   train
    out/reports/<tag>.txt, <tag>.csv          eval
    out/inspect/<record>_<start>.csv          inspect
    out/manifests/<command>.json              every stage
"""

from __future__ import annotations

import hashlib
import json
import logging
import platform
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ecgnet import dsp
from ecgnet.engine.checkpoint import load_checkpoint, save_checkpoint
from ecgnet.engine.tensor import get_dtype
from ecgnet.errors import (
    DataError,
    MissingCheckpoint,
    MissingRecord,
    UsageError,
)
from ecgnet.evaluation import HIGHLIGHTED, ReportRow, all_class_metrics, evaluate, report
from ecgnet.introspection import activation_map, write_activation_csv
from ecgnet.model import ModelSpec, build_model
from ecgnet.record_io import (
    format_annotations,
    parse_annotations,
    parse_header,
    read_record,
    read_wfdb_record,
    write_record,
)
from ecgnet.segmentation import (
    N_CLASSES,
    RecordStore,
    SegmentSet,
    balanced_sample,
    build_dataset,
    read_segments,
    split_records,
    write_segments,
)
from ecgnet.training import as_training_set, train

log = logging.getLogger(__name__)

DEFAULT_CHANNELS = {"mitdb": "MLII", "svdb": "ECG1"}
SPLIT_DB = {"DS1": "mitdb", "DST1": "mitdb", "DS2": "svdb", "DST2": "svdb"}
ANNOTATION_SUFFIXES = (".txt", ".ann", ".atr.txt")
# per-class sampling targets for T2 (N, SVEB, VEB, F, Q)
T2_TARGETS = (17000, 17000, 17000, 546, 217)
EXPERIMENT_TAGS = ("T1", "T2", "T3a", "T3b", "T4")


@dataclass(frozen=True)
class Layout:
    root: Path

    def __post_init__(self):
        object.__setattr__(self, "root", Path(self.root))

    def dir(self, *parts):
        path = self.root.joinpath(*parts)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def raw(self, db):
        return self.dir("raw", db)

    def pre(self, db):
        return self.dir("pre", db)

    def segments(self, name):
        return self.dir("segments") / f"{name}.ecgseg"

    def model(self, name):
        return self.dir("models") / f"{name}.ecgwts"

    def report(self, tag):
        return self.dir("reports") / tag


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(layout, command, config, seed, inputs=(), outputs=(), extra=None):
    """Record what is needed to rerun a stage: config, seed, precision and file digests."""
    doc = {
        "command": command,
        "seed": seed,
        "precision": 64 if get_dtype() == np.float64 else 32,
        "config_sha256": config.digest(),
        "config": config.to_dict(),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs if Path(p).is_file()},
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        doc.update(extra)
    path = layout.dir("manifests") / f"{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


# ---------------------------------------------------------------- ingest


def find_headers(paths):
    """Expand directories to their ``*.hea`` files; keep explicit files."""
    out = []
    for p in map(Path, paths):
        if p.is_dir():
            out.extend(sorted(p.glob("*.hea")))
        elif p.is_file():
            out.append(p)
        else:
            raise MissingRecord(f"{p}: no such header or directory")
    if not out:
        raise MissingRecord(f"no .hea files found in {', '.join(map(str, paths))}")
    return out


def find_annotation(header_path):
    stem = header_path.with_suffix("")
    for suffix in ANNOTATION_SUFFIXES:
        cand = stem.parent / (stem.name + suffix)
        if cand.is_file():
            return cand
    return None


def _pick_channel(header, channel, db):
    if channel is not None:
        return int(channel) if str(channel).isdigit() else header.channel_index(channel)
    wanted = DEFAULT_CHANNELS.get(db)
    names = [c.name for c in header.channels]
    if wanted in names:
        return names.index(wanted)
    log.warning("record %s has no %s lead; using channel 0 (%s)", header.record_id, wanted, names[0])
    return 0


def ingest(layout, paths, db="mitdb", channel=None, annotation=None):
    """Parse WFDB records into ECGREC1 containers plus plain annotation text."""
    headers = find_headers(paths)
    if annotation is not None and len(headers) != 1:
        raise UsageError("--annotations needs exactly one header")
    written, inputs = [], []
    for hea in headers:
        header = parse_header(hea.read_text())
        ann_path = Path(annotation) if annotation is not None else find_annotation(hea)
        if ann_path is None:
            raise MissingRecord(f"no annotation text next to {hea} (tried {', '.join(ANNOTATION_SUFFIXES)})")
        idx = _pick_channel(header, channel, db)
        _, record, anns = read_wfdb_record(hea, idx, ann_path)
        out = layout.raw(db) / f"{record.record_id}.ecgrec"
        write_record(out, record)
        (out.with_suffix(".ann")).write_text(format_annotations(anns))
        written += [out, out.with_suffix(".ann")]
        inputs += [hea, hea.parent / header.channels[idx].file_name, ann_path]
        log.info("ingested %s: %d samples at %g Hz, %d annotations", record.record_id,
                 len(record), record.fs, len(anns))
    return inputs, written


# ------------------------------------------------------------- preprocess


def _record_ids(directory, record_ids=None):
    found = sorted(p.stem for p in directory.glob("*.ecgrec"))
    if record_ids:
        missing = sorted(set(map(str, record_ids)) - set(found))
        if missing:
            raise MissingRecord(f"{directory}: missing records {', '.join(missing)}")
        return [str(r) for r in record_ids]
    return found


def preprocess(layout, db="mitdb", record_ids=None, config=dsp.PreprocessConfig()):
    """Baseline removal, smoothing and resampling of every ingested record of ``db``."""
    src = layout.raw(db)
    ids = _record_ids(src, record_ids)
    if not ids:
        raise MissingRecord(f"no ingested records under {src}")
    inputs, written = [], []
    for rid in ids:
        raw_path = src / f"{rid}.ecgrec"
        record = read_record(raw_path, rid)
        pre = dsp.preprocess_record(record, config)
        out = layout.pre(db) / f"{rid}.ecgrec"
        write_record(out, pre)
        shutil.copyfile(src / f"{rid}.ann", out.with_suffix(".ann"))
        out.with_suffix(".json").write_text(json.dumps({"fs_orig": record.fs, "fs": pre.fs}) + "\n")
        inputs += [raw_path, src / f"{rid}.ann"]
        written += [out, out.with_suffix(".ann"), out.with_suffix(".json")]
    return inputs, written


def load_stores(layout, db):
    """Preprocessed records of ``db`` keyed by id, ready for segmentation."""
    src = layout.pre(db)
    stores = {}
    for rid in _record_ids(src):
        meta = json.loads((src / f"{rid}.json").read_text())
        record = read_record(src / f"{rid}.ecgrec", rid, preprocessed=True)
        anns = parse_annotations((src / f"{rid}.ann").read_text())
        stores[rid] = RecordStore(record, anns, meta["fs_orig"])
    return stores


# ---------------------------------------------------------------- segment


def _write_store(layout, name, segs, mean, std, record_ids=()):
    path = layout.segments(name)
    write_segments(path, segs)
    stats = {"split": segs.split, "role": segs.role, "mean": mean, "std": std,
             "count": len(segs), "class_counts": segs.class_counts().tolist(),
             "record_ids": list(record_ids)}
    stats_path = path.with_suffix(".stats.json")
    stats_path.write_text(json.dumps(stats, indent=2) + "\n")
    return path, stats_path


def segment(layout, split, db=None, record_ids=None, overrides=None, standardize=True, name=None):
    """Cut, label and (by default) standardize the segments of one split."""
    db = db or SPLIT_DB.get(split)
    if db is None:
        raise UsageError(f"split {split!r} has no default database; pass --db")
    stores = load_stores(layout, db)
    if record_ids is None:
        record_ids = split_records(split, available=stores.keys(), overrides=overrides)
    ds = build_dataset(split, stores, record_ids, standardize=standardize)
    log.info("%s: %d segments, class counts %s", split, len(ds.segments), ds.class_counts.tolist())
    inputs = [layout.pre(db) / f"{r}.ecgrec" for r in ds.record_ids]
    written = _write_store(layout, name or split, ds.segments, ds.mean, ds.std, ds.record_ids)
    return inputs, list(written)


def sample(layout, inputs, targets, seed, name="sampled"):
    """Balanced non-replacement draw from several stores, then re-standardized."""
    if len(targets) != N_CLASSES:
        raise UsageError(f"need {N_CLASSES} per-class targets, got {len(targets)}")
    sets = [read_segments(p) for p in inputs]
    drawn = balanced_sample(sets, targets, seed, split=name)
    if len(drawn) == 0:
        raise DataError("balanced sample is empty")
    drawn, mean, std = dsp.standardize(drawn)
    return list(inputs), list(_write_store(layout, name, drawn, mean, std))


# ------------------------------------------------------------------ train


def spec_path(checkpoint):
    return Path(str(checkpoint) + ".spec.json")


def load_model(checkpoint, fallback_spec=None):
    """Rebuild a model from ``checkpoint`` and its spec sidecar."""
    checkpoint = Path(checkpoint)
    if not checkpoint.is_file():
        raise MissingCheckpoint(f"checkpoint {checkpoint} not found")
    sidecar = spec_path(checkpoint)
    if sidecar.is_file():
        spec = ModelSpec.from_dict(_spec_doc(sidecar))
    elif fallback_spec is not None:
        spec = fallback_spec
    else:
        raise MissingCheckpoint(f"no model spec next to {checkpoint}")
    model = build_model(spec)
    load_checkpoint(checkpoint, model.params, model.buffers)
    return model


def _spec_doc(path):
    doc = json.loads(Path(path).read_text())
    doc["transition_strides"] = tuple(doc["transition_strides"])
    return doc


def train_stage(layout, train_paths, checkpoint, config, val_path=None, init=None, retag=False):
    """Train on one or more stores and write checkpoint, spec, history and stats."""
    sets = [read_segments(p) for p in train_paths]
    if retag:
        sets = [as_training_set(s) for s in sets]
    segs = sets[0] if len(sets) == 1 else SegmentSet.concat(sets, split="+".join(s.split for s in sets))
    validation = read_segments(val_path) if val_path else None
    model = build_model(config.model, seed=config.train.seed)
    if init is not None:
        init = Path(init)
        if not init.is_file():
            raise MissingCheckpoint(f"checkpoint {init} not found")
        load_checkpoint(init, model.params, model.buffers)
    model, history = train(model, segs, config.train, validation)
    checkpoint = Path(checkpoint)
    checkpoint.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(checkpoint, model.params, model.buffers)
    spec_path(checkpoint).write_text(config.model.dumps() + "\n")
    hist = Path(str(checkpoint) + ".history.csv")
    history.write_csv(hist)
    written = [checkpoint, spec_path(checkpoint), hist]
    stats = [Path(p).with_suffix(".stats.json") for p in train_paths]
    if len(stats) == 1 and stats[0].is_file():
        # training statistics travel with the model for cross-dataset runs
        dest = Path(str(checkpoint) + ".stats.json")
        shutil.copyfile(stats[0], dest)
        written.append(dest)
    log.info("trained %s: best epoch %d, val loss %.5f (%s)", checkpoint.name,
             history.best_epoch, history.best_val_loss, history.stop_reason)
    inputs = list(train_paths) + ([val_path] if val_path else []) + ([init] if init else [])
    return inputs, written, model, history


# ------------------------------------------------------------------- eval


def eval_stage(layout, checkpoint, segment_paths, tag="eval", model_name=None, per_class=False,
               csv_path=None, config=None):
    """Evaluate a checkpoint; returns ``(inputs, written, text)``."""
    fallback = config.model if config is not None else None
    model = load_model(checkpoint, fallback)
    sets = [read_segments(p) for p in segment_paths]
    segs = sets[0] if len(sets) == 1 else SegmentSet.concat(sets, split="+".join(s.split for s in sets))
    cm = evaluate(model, segs)
    classes = tuple(range(N_CLASSES)) if per_class else HIGHLIGHTED
    row = ReportRow(tag, model_name or model.spec.architecture, all_class_metrics(cm))
    text, csv_text = report([row], classes)
    base = layout.report(tag)
    csv_path = Path(csv_path) if csv_path else base.with_suffix(".csv")
    csv_path.write_text(csv_text)
    txt = base.with_suffix(".txt")
    txt.write_text(text)
    cm_path = base.with_suffix(".confusion.json")
    cm_path.write_text(json.dumps({"rows_true_cols_pred": cm.counts.tolist()}) + "\n")
    inputs = [Path(checkpoint), *map(Path, segment_paths)]
    return inputs, [csv_path, txt, cm_path], text


# ---------------------------------------------------------------- inspect


def inspect_stage(layout, checkpoint, segment_path, indices, normalized=False, config=None):
    model = load_model(checkpoint, config.model if config is not None else None)
    segs = read_segments(segment_path)
    written = []
    for i in indices:
        if not 0 <= i < len(segs):
            raise UsageError(f"segment index {i} out of range (0..{len(segs) - 1})")
        seg = segs[i]
        trunk = activation_map(model, seg.samples, "trunk_last_conv")
        gru = activation_map(model, seg.samples, "gru")
        out = layout.dir("inspect") / f"{seg.source_record}_{seg.start_index}.csv"
        write_activation_csv(out, seg.samples, trunk, gru, normalized)
        written.append(out)
    return [Path(checkpoint), Path(segment_path)], written


# ------------------------------------------------------------- experiment


def _prepare_db(layout, db, directory, config):
    if not directory:
        raise UsageError(f"experiment needs the {db} directory (--{db} or data.{db}_dir)")
    inputs, _ = ingest(layout, [directory], db)
    preprocess(layout, db, config=config.preprocess)
    return inputs


def run_experiment(layout, tag, config, mitdb=None, svdb=None, overrides=None, pretrained=None,
                   repeats=1):
    """Run one recipe end to end; returns the report rows and the files read and written.

    T1   train DS1, test DST1
    T2   balanced DS1+DS2 draws (``repeats`` of them), test DST1
    T3a  train DS1+DST1, test DST2
    T3b  pretrained T2 model, test DST2
    T4   pretrained T2 model, test DST1 and DST2
    """
    if tag not in EXPERIMENT_TAGS:
        raise UsageError(f"unknown experiment tag {tag!r}; expected one of {EXPERIMENT_TAGS}")
    if tag in ("T3b", "T4") and pretrained is None:
        raise UsageError(f"{tag} evaluates a pretrained T2 model; pass --pretrained")
    mitdb = mitdb or config.data.mitdb_dir
    svdb = svdb or config.data.svdb_dir
    overrides = overrides if overrides is not None else config.data.split_overrides
    needs = {"T1": ("mitdb",), "T2": ("mitdb", "svdb"), "T3a": ("mitdb", "svdb"),
             "T3b": ("svdb",), "T4": ("mitdb", "svdb")}[tag]
    dirs = {"mitdb": mitdb, "svdb": svdb}
    raw_inputs = []
    for db in needs:
        raw_inputs += _prepare_db(layout, db, dirs[db], config)

    def seg(split, **kw):
        return segment(layout, split, overrides=overrides, **kw)[1][0]

    seed = config.train.seed
    inputs, written, rows = list(raw_inputs), [], []

    def evaluate_on(checkpoint, test_paths, row_tag, name):
        i, w, text = eval_stage(layout, checkpoint, test_paths, row_tag, name, per_class=True)
        rows.append(text)
        inputs.extend(i)
        written.extend(w)

    if tag == "T1":
        ckpt = layout.model("T1")
        i, w, _, _ = train_stage(layout, [seg("DS1")], ckpt, config)
        inputs += i
        written += w
        evaluate_on(ckpt, [seg("DST1")], "T1", config.model.architecture)
    elif tag == "T2":
        pools = [seg("DS1"), seg("DS2")]
        test = seg("DST1")
        for r in range(repeats):
            name = "T2" if repeats == 1 else f"T2_{r}"
            sample(layout, pools, T2_TARGETS, seed + r, name=name)
            ckpt = layout.model(name)
            i, w, _, _ = train_stage(layout, [layout.segments(name)], ckpt, config, init=pretrained)
            inputs += i
            written += w
            evaluate_on(ckpt, [test], name, config.model.architecture)
    elif tag == "T3a":
        # the whole of mitdb is one training split here, standardized as a unit
        pool = seg("DS1+DST1", db="mitdb",
                   record_ids=split_records("DS1", overrides=overrides)
                   + split_records("DST1", overrides=overrides))
        ckpt = layout.model("T3a")
        i, w, _, _ = train_stage(layout, [pool], ckpt, config, init=pretrained)
        inputs += i
        written += w
        evaluate_on(ckpt, [seg("DST2")], "T3a", config.model.architecture)
    elif tag == "T3b":
        evaluate_on(Path(pretrained), [seg("DST2")], "T3b", config.model.architecture)
    else:
        evaluate_on(Path(pretrained), [seg("DST1"), seg("DST2")], "T4", config.model.architecture)
    return rows, inputs, written
