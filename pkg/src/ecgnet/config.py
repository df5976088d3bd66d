"""Run configuration: model spec, training and preprocessing settings in one JSON document.

Sections are ``model``, ``train``, ``preprocess`` and ``data``; every
field is optional and falls back to its dataclass default::

    {"model": {"growth_rate": 24}, "train": {"max_epochs": 100},
     "data": {"mitdb_dir": "/data/mitdb"}}
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from ecgnet.dsp import PreprocessConfig
from ecgnet.errors import InvalidValue, UnknownField
from ecgnet.model import ModelSpec
from ecgnet.training import TrainConfig


@dataclass(frozen=True)
class DataConfig:
    mitdb_dir: str = ""
    svdb_dir: str = ""
    # split name -> explicit record ids, overriding the built-in tables
    split_overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self):
        return {
            "model": self.model.to_dict(),
            "train": dataclasses.asdict(self.train),
            "preprocess": dataclasses.asdict(self.preprocess),
            "data": {**dataclasses.asdict(self.data),
                     "split_overrides": {k: list(v) for k, v in self.data.split_overrides.items()}},
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self):
        """sha256 of the canonical JSON form."""
        return hashlib.sha256(self.dumps().encode()).hexdigest()

    def replace(self, **sections):
        return dataclasses.replace(self, **sections)


_SECTIONS = {"model": ModelSpec, "train": TrainConfig, "preprocess": PreprocessConfig, "data": DataConfig}


def _build(cls, section, values):
    if not isinstance(values, dict):
        raise InvalidValue(f"section {section!r} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise UnknownField(f"unknown {section} fields: {sorted(unknown)}")
    values = dict(values)
    if cls is ModelSpec and "transition_strides" in values:
        values["transition_strides"] = tuple(values["transition_strides"])
    try:
        return cls(**values)
    except TypeError as exc:
        raise InvalidValue(f"{section}: {exc}") from None


def config_from_dict(doc):
    """Resolve a parsed document into a validated :class:`RunConfig`.

    Dropout lives in both the model and train sections. When only one
    is given it is copied to the other; differing values are an error.
    """
    doc = doc or {}
    if not isinstance(doc, dict):
        raise InvalidValue("configuration must be a JSON object")
    unknown = set(doc) - set(_SECTIONS)
    if unknown:
        raise UnknownField(f"unknown sections: {sorted(unknown)}")
    for name, section in doc.items():
        if not isinstance(section, dict):
            raise InvalidValue(f"section {name!r} must be a JSON object")
    model = dict(doc.get("model", {}))
    train = dict(doc.get("train", {}))
    if "dropout" in model and "dropout" in train and model["dropout"] != train["dropout"]:
        raise InvalidValue(f"model dropout {model['dropout']} != train dropout {train['dropout']}")
    if "dropout" in model:
        train.setdefault("dropout", model["dropout"])
    elif "dropout" in train:
        model["dropout"] = train["dropout"]
    return RunConfig(
        model=_build(ModelSpec, "model", model),
        train=_build(TrainConfig, "train", train),
        preprocess=_build(PreprocessConfig, "preprocess", doc.get("preprocess", {})),
        data=_build(DataConfig, "data", doc.get("data", {})),
    )


def loads_config(text):
    if not text.strip():
        return RunConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidValue(f"configuration is not valid JSON: {exc}") from None
    return config_from_dict(doc)


def load_config(path=None):
    """Read a JSON config file; ``None`` or an empty file gives all defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InvalidValue(f"config file {path} not found") from None
    return loads_config(text)


def save_config(path, config):
    Path(path).write_text(config.dumps() + "\n")
