import json

import pytest

from labelloop import Engine, LoopService, RawStore, import_items
from labelloop.export import parse_export, standalone_score

from conftest import make_records

MONTHS = {"type": "dictionary", "name": "months", "entries": ["january", "february", "snow"]}


@pytest.fixture
def trained(tmp_path):
    import_items(make_records(60), tmp_path / "data", "d", bucket_capacity=10)
    engine = Engine(RawStore.open(tmp_path / "data", "d"), shard_count=3)
    service = LoopService(engine, tmp_path / "sessions", scoring="sync")
    sid = service.create_session(features=[MONTHS], retrain_threshold=8, split_ratio=1.0)
    labels = [(r, "positive" if r % 3 == 0 else "negative") for r in range(8)]
    service.submit_labels(sid, labels)
    return service, sid


def test_round_trip_and_shape(trained):
    service, sid = trained
    text = service.export_model(sid, 1)
    doc = parse_export(text)
    assert doc["model_version"] == 1
    assert doc["dataset_id"] == "d"
    assert doc["features"][0]["type"] == "dictionary"
    assert all(w != 0.0 for w in doc["weights"].values())
    assert doc["calibrator"] is None or list(doc["calibrator"]) == ["breakpoints", "values"]


def test_standalone_matches_engine_predictions(trained):
    service, sid = trained
    doc = parse_export(service.export_model(sid, 1))
    session = service.sessions[sid]
    record = session.latest
    for row in range(60):
        raw = service.engine.store.fetch_record(row)
        standalone = standalone_score(doc, raw)
        engine_side = record.model.predict_vec(
            service.feature_vector(record.feature_column, row)
        )
        assert standalone == pytest.approx(engine_side, abs=1e-12)


def test_export_is_valid_json_text(trained):
    service, sid = trained
    text = service.export_model(sid, 1)
    assert text.endswith("\n")
    json.loads(text)  # plain-text JSON document


def test_model_as_feature_round_trip(tmp_path):
    import_items(make_records(60), tmp_path / "data", "d", bucket_capacity=10)
    engine = Engine(RawStore.open(tmp_path / "data", "d"), shard_count=2)
    service = LoopService(engine, tmp_path / "sessions", scoring="sync")
    base_sid = service.create_session(features=[MONTHS], retrain_threshold=8, split_ratio=1.0)
    labels = [(r, "positive" if r % 3 == 0 else "negative") for r in range(8)]
    service.submit_labels(base_sid, labels)

    composed_sid = service.create_session(
        features=[
            {"type": "dictionary", "name": "animals", "entries": ["cat", "dog"]},
            {"type": "model_score", "name": "base", "session_id": base_sid, "model_version": 1},
        ],
        retrain_threshold=8,
        split_ratio=1.0,
    )
    service.submit_labels(composed_sid, [(r, "positive" if r % 3 == 0 else "negative") for r in range(10, 18)])
    session = service.sessions[composed_sid]
    assert session.latest_version == 1

    # the model feature's value is the frozen base model's probability
    base_record = service.sessions[base_sid].latest
    fv = session.space.get_active("base")
    composed_record = session.latest
    for row in (0, 5, 20):
        vec = service.feature_vector(composed_record.feature_column, row)
        base_p = base_record.model.predict_vec(
            service.feature_vector(base_record.feature_column, row)
        )
        assert vec[fv.base_id] == pytest.approx(base_p, abs=1e-12)

    # exporting the composed model embeds the base model; standalone scoring works
    doc = parse_export(service.export_model(composed_sid, 1))
    kinds = {f["type"] for f in doc["features"]}
    assert kinds == {"dictionary", "model_score"}
    raw = service.engine.store.fetch_record(3)
    got = standalone_score(doc, raw)
    want = composed_record.model.predict_vec(
        service.feature_vector(composed_record.feature_column, 3)
    )
    assert got == pytest.approx(want, abs=1e-12)
