"""Mini-batch Adam training with early stopping on validation loss."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ecgnet.dsp import round_half_up
from ecgnet.engine.optim import adam_step
from ecgnet.engine.tensor import no_grad
from ecgnet.errors import EmptyInput, InvalidValue, SplitLeakage
from ecgnet.segmentation import N_CLASSES, SegmentSet, one_hot

log = logging.getLogger(__name__)

# a validation loss must drop by more than this to count as improvement
MIN_DELTA = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    max_epochs: int = 500
    batch_size: int = 50
    patience: int = 50
    lr: float = 5e-4
    dropout: float = 0.25
    seed: int = 0
    validation_fraction: float = 0.1
    precision: int = 32

    def __post_init__(self):
        if self.max_epochs < 0 or self.batch_size < 1:
            raise InvalidValue("max_epochs must be >= 0 and batch_size >= 1")
        if not 0 <= self.patience <= self.max_epochs:
            raise InvalidValue("patience must be in [0, max_epochs]")
        if not 0 < self.validation_fraction < 0.5:
            raise InvalidValue("validation_fraction must be in (0, 0.5)")
        if not 0 <= self.dropout < 1:
            raise InvalidValue("dropout must be in [0, 1)")
        if self.lr <= 0:
            raise InvalidValue("lr must be positive")
        if self.precision not in (32, 64):
            raise InvalidValue("precision must be 32 or 64")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = "max_epochs"

    @property
    def best_val_loss(self):
        return self.val_loss[self.best_epoch] if self.best_epoch >= 0 else float("nan")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss", "seconds"])
            for i, row in enumerate(zip(self.train_loss, self.val_loss, self.seconds)):
                w.writerow([i, repr(row[0]), repr(row[1]), f"{row[2]:.3f}"])


def split_validation(segments, fraction=0.1, seed=0):
    """Stratified train/validation split.

    The validation size is ``round(fraction * n)`` over classes with at
    least two segments, shared out by largest remainder so every class
    gets within one of ``round(fraction * count)``. Classes with a single
    segment stay in training.
    """
    if len(segments) == 0:
        raise EmptyInput("cannot split an empty segment set")
    if not 0 < fraction < 0.5:
        raise InvalidValue("fraction must be in (0, 0.5)")
    rng = np.random.default_rng(seed)
    counts = segments.class_counts()
    eligible = counts >= 2
    exact = np.where(eligible, fraction * counts, 0.0)
    alloc = np.floor(exact).astype(np.int64)
    total = round_half_up(fraction * counts[eligible].sum())
    order = np.argsort(-(exact - alloc), kind="stable")
    for c in order[: max(0, total - alloc.sum())]:
        if eligible[c]:
            alloc[c] += 1
    val_idx = []
    for c in range(N_CLASSES):
        idx = np.flatnonzero(segments.labels == c)
        if alloc[c]:
            val_idx.append(rng.permutation(idx)[: alloc[c]])
    val_idx = np.sort(np.concatenate(val_idx)) if val_idx else np.zeros(0, np.int64)
    mask = np.ones(len(segments), bool)
    mask[val_idx] = False
    return segments.take(np.flatnonzero(mask)), segments.take(val_idx)


def evaluate_loss(model, segments, batch_size=50):
    """Segment-weighted mean loss in infer mode."""
    if len(segments) == 0:
        raise EmptyInput("no segments to evaluate")
    targets = segments.one_hot
    total = 0.0
    with no_grad():
        for i in range(0, len(segments), batch_size):
            batch = segments.samples[i : i + batch_size]
            _, loss = model.loss(batch, targets[i : i + batch_size], mode="infer")
            total += float(loss.data) * batch.shape[0]
    return total / len(segments)


def train(model, segments, config=TrainConfig(), validation=None):
    """Train ``model`` in place and return ``(model, history)``.

    The validation set defaults to a stratified split of ``segments``.
    The parameters from the epoch with the lowest validation loss are
    restored before returning.
    """
    if segments.role == "test":
        raise SplitLeakage(f"refusing to train on test split {segments.split!r}")
    history = TrainHistory()
    if config.max_epochs == 0:
        return model, history
    if validation is None:
        train_set, validation = split_validation(segments, config.validation_fraction, config.seed)
    else:
        if validation.role == "test":
            raise SplitLeakage(f"refusing to validate on test split {validation.split!r}")
        train_set = segments
    if len(train_set) == 0 or len(validation) == 0:
        raise EmptyInput("training and validation sets must be non-empty")

    shuffle_rng = np.random.default_rng([config.seed, 1])
    dropout_rng = np.random.default_rng([config.seed, 2])
    targets = one_hot(train_set.labels).astype(model.dtype)
    n = len(train_set)
    best, best_snapshot, wait = np.inf, None, 0

    for epoch in range(config.max_epochs):
        start = time.perf_counter()
        order = shuffle_rng.permutation(n)
        running = 0.0
        for i in range(0, n, config.batch_size):
            idx = order[i : i + config.batch_size]
            _, loss = model.loss(train_set.samples[idx], targets[idx], "train", dropout_rng)
            model.zero_grad()
            loss.backward()
            adam_step(model.parameters(), lr=config.lr)
            running += float(loss.data) * idx.shape[0]
        val = evaluate_loss(model, validation, config.batch_size)
        history.train_loss.append(running / n)
        history.val_loss.append(val)
        history.seconds.append(time.perf_counter() - start)
        log.info("epoch %d train %.5f val %.5f", epoch, running / n, val)

        if val < best - MIN_DELTA:
            best, wait = val, 0
            history.best_epoch = epoch
            best_snapshot = model.snapshot()
        else:
            wait += 1
            if wait >= config.patience:
                history.stop_reason = "early_stop"
                break

    if best_snapshot is not None:
        model.restore(best_snapshot)
    model.zero_grad()
    return model, history


def predict(model, segments, batch_size=50):
    return model.predict_proba(segments.samples, batch_size).argmax(axis=1)


def accuracy(model, segments, batch_size=50):
    if len(segments) == 0:
        raise EmptyInput("no segments")
    return float(np.mean(predict(model, segments, batch_size) == segments.labels))


def as_training_set(segments, split=None):
    """Re-tag a collection as training data (used by recipes that train on a test split)."""
    return SegmentSet.replace(segments, role="train", split=split or segments.split)
