"""Self-contained model export documents.

An export carries everything needed to score raw text with no engine
attached: nonzero weights keyed by coordinate id, the bias and regularization
strength, the calibrator, and the full definitions (with coordinate ids) of
every active feature version. Model-as-feature definitions embed the
referenced model's own export recursively.
"""

from __future__ import annotations

import json
import math
from typing import Mapping

from .features import (
    BowTfidfFeature,
    DictionaryFeature,
    FeatureSpace,
    FeatureVersion,
    ModelScoreFeature,
    definition_from_doc,
)
from .tokens import tokenize
from .trainer import LinearModel

EXPORT_FORMAT = "labelloop-model/1"


def build_export(
    model: LinearModel,
    space: FeatureSpace,
    dataset_id: str,
) -> dict:
    weights = {
        str(i): float(w) for i, w in enumerate(model.weights) if w != 0.0
    }
    return {
        "format": EXPORT_FORMAT,
        "dataset_id": dataset_id,
        "model_version": model.version,
        "reg_strength": model.reg_strength,
        "bias": model.bias,
        "weights": weights,
        "calibrator": model.calibrator.to_dict() if model.calibrator else None,
        "tokenizer": "lowercase alphanumeric runs",
        "features": [fv.to_doc() for fv in space.active],
    }


def export_to_text(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def parse_export(text: str) -> dict:
    doc = json.loads(text)
    if doc.get("format") != EXPORT_FORMAT:
        raise ValueError(f"not a {EXPORT_FORMAT} document")
    return doc


def _feature_versions(doc: dict) -> list[FeatureVersion]:
    out = []
    for fdoc in doc["features"]:
        definition = definition_from_doc(fdoc)
        out.append(
            FeatureVersion(
                name=fdoc["name"],
                version=int(fdoc["version"]),
                definition=definition,
                base_id=int(fdoc["base_id"]),
                width=int(fdoc["width"]),
            )
        )
    return out


def standalone_score(doc: dict, record: Mapping[str, str]) -> float:
    """Score one raw record using nothing but the export document.

    Reproduces the engine's probability for the same record (tokenization,
    feature statistics, sparse dot product, sigmoid, then calibration).
    """
    versions = _feature_versions(doc)
    needed = set()
    for fv in versions:
        d = fv.definition
        if isinstance(d, (DictionaryFeature, BowTfidfFeature)):
            needed.add(d.source_column)
    tokens_by_column = {col: tokenize(record[col]) for col in needed}

    z = float(doc["bias"])
    weights = doc["weights"]
    for fv in versions:
        for fid, value in fv.compute(record, tokens_by_column).items():
            w = weights.get(str(fid))
            if w is not None:
                z += w * value
    p = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    cal = doc.get("calibrator")
    if cal:
        breakpoints = cal["breakpoints"]
        values = cal["values"]
        idx = _bisect_right(breakpoints, p) - 1
        p = values[max(0, min(idx, len(values) - 1))]
    return float(p)


def _bisect_right(arr: list[float], x: float) -> int:
    lo, hi = 0, len(arr)
    while lo < hi:
        mid = (lo + hi) // 2
        if x < arr[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def make_model_feature(name: str, doc: dict) -> ModelScoreFeature:
    """Wrap an export document as a frozen, deterministic feature."""
    return ModelScoreFeature(name=name, export_doc=doc)
