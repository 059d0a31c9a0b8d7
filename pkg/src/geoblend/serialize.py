"""Versioned JSON model files with a kind registry for round-tripping."""

from __future__ import annotations

import json

from .errors import DataError
from .frk import FrkModel
from .kriging import KrigingModel
from .ml import EnnModel, LinearRegression, RandomForest, SvrModel
from .nngp import NngpModel

MODEL_CLASSES = {
    "kriging": KrigingModel,
    "nngp": NngpModel,
    "frk": FrkModel,
    "reg": LinearRegression,
    "rf": RandomForest,
    "svr": SvrModel,
    "enn": EnnModel,
}

FORMAT = "geoblend-model"
VERSION = 1


def save_model(model, path, extra: dict | None = None) -> None:
    doc = model.to_dict()
    if doc.get("format") != FORMAT:
        raise ValueError(f"model {type(model).__name__} does not emit the {FORMAT} format")
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise DataError(f"{path} is not a {FORMAT} file")
    if doc.get("version") != VERSION:
        raise DataError(f"{path} has unsupported version {doc.get('version')}")
    kind = doc.get("kind")
    cls = MODEL_CLASSES.get(kind)
    if cls is None:
        raise DataError(f"unknown model kind {kind!r} in {path}")
    return cls.from_dict(doc)
