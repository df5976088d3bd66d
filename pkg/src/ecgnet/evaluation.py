"""Confusion matrices and one-vs-rest AAMI metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ecgnet.errors import LengthMismatch
from ecgnet.segmentation import N_CLASSES, AamiClass

METRIC_NAMES = ("acc", "sen", "spe", "ppv", "f1")
HIGHLIGHTED = (AamiClass.SVEB, AamiClass.VEB)


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows = true class, columns = predicted

    @property
    def total(self):
        return int(self.counts.sum())


def confusion_matrix(predicted, true, n_classes=N_CLASSES):
    predicted = np.asarray(predicted, dtype=np.int64)
    true = np.asarray(true, dtype=np.int64)
    if predicted.shape != true.shape:
        raise LengthMismatch(f"{predicted.shape[0]} predictions for {true.shape[0]} labels")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (true, predicted), 1)
    return ConfusionMatrix(counts)


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


def f1_score(sen, ppv):
    """Harmonic mean of sensitivity and positive predictivity (0 if both are 0)."""
    return 2 * sen * ppv / (sen + ppv) if sen + ppv else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    acc: float
    sen: float
    spe: float
    ppv: float
    f1: float
    degenerate: tuple = ()

    @classmethod
    def from_counts(cls, tp, fp, tn, fn):
        acc, d_acc = _ratio(tp + tn, tp + fp + tn + fn)
        sen, d_sen = _ratio(tp, tp + fn)
        spe, d_spe = _ratio(tn, fp + tn)
        ppv, d_ppv = _ratio(tp, fp + tp)
        f1, d_f1 = _ratio(2 * sen * ppv, sen + ppv)
        flags = tuple(n for n, d in zip(METRIC_NAMES, (d_acc, d_sen, d_spe, d_ppv, d_f1)) if d)
        return cls(int(tp), int(fp), int(tn), int(fn), acc, sen, spe, ppv, f1, flags)

    def as_percent(self):
        return tuple(round(100 * getattr(self, n), 2) for n in METRIC_NAMES)


def class_metrics(cm, cls):
    """One-vs-rest reduction of the confusion matrix for class ``cls``."""
    c = int(cls)
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    tp = int(counts[c, c])
    fn = int(counts[c, :].sum()) - tp
    fp = int(counts[:, c].sum()) - tp
    tn = int(counts.sum()) - tp - fn - fp
    return ClassMetrics.from_counts(tp, fp, tn, fn)


def all_class_metrics(cm):
    return {AamiClass(c): class_metrics(cm, c) for c in range(cm.counts.shape[0])}


@dataclass
class ReportRow:
    tag: str
    model: str
    metrics: dict  # AamiClass -> ClassMetrics


def _header(classes):
    cols = "  ".join(f"{n.upper() if n != 'f1' else 'F1':>6}" for n in METRIC_NAMES)
    left = f"{'tag':<5} {'model':<10}"
    top = left + "".join(f" | {c.name:^{len(cols)}}" for c in classes)
    bottom = " " * len(left) + "".join(f" | {cols}" for _ in classes)
    return [top, bottom]


def format_row(row, classes=HIGHLIGHTED):
    parts = [f"{row.tag:<5} {row.model:<10}"]
    for c in classes:
        vals = row.metrics[AamiClass(c)].as_percent()
        parts.append(" | " + "  ".join(f"{v:6.2f}" for v in vals))
    return "".join(parts)


def report(rows, classes=HIGHLIGHTED):
    """Render rows as an aligned text table and a long-format CSV.

    Returns ``(text, csv_text)``. Metric values are percentages rounded
    to two decimals.
    """
    classes = [AamiClass(c) for c in classes]
    lines = _header(classes) + [format_row(r, classes) for r in rows]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tag", "model", "class", *METRIC_NAMES, "tp", "fp", "tn", "fn", "degenerate"])
    for r in rows:
        for c in classes:
            m = r.metrics[c]
            w.writerow([r.tag, r.model, c.name, *(f"{v:.2f}" for v in m.as_percent()),
                        m.tp, m.fp, m.tn, m.fn, ";".join(m.degenerate)])
    return "\n".join(lines) + "\n", buf.getvalue()


def parse_report_csv(text):
    out = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"tag": rec["tag"], "model": rec["model"], "class": rec["class"]}
        row.update({n: float(rec[n]) for n in METRIC_NAMES})
        row.update({n: int(rec[n]) for n in ("tp", "fp", "tn", "fn")})
        row["degenerate"] = tuple(filter(None, rec["degenerate"].split(";")))
        out.append(row)
    return out


def evaluate(model, segments, batch_size=50):
    """Confusion matrix of ``model`` over ``segments``."""
    pred = model.predict_proba(segments.samples, batch_size).argmax(axis=1)
    return confusion_matrix(pred, segments.labels)
