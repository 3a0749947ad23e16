import json
import random

import pytest

from labelloop.raw_store import (
    CorruptBucket,
    ImmutabilityViolation,
    DatasetManifest,
    RawStore,
    RowOutOfRange,
    append_records,
    canonical_record_bytes,
    import_items,
)

from conftest import make_records


def test_bucket_layout_forced_by_contiguity(tmp_path):
    manifest, report = import_items(make_records(10), tmp_path, "d", bucket_capacity=4)
    assert [b.row_count for b in manifest.buckets] == [4, 4, 2]
    assert [b.start_row_id for b in manifest.buckets] == [0, 4, 8]
    assert report.imported == 10 and report.skipped == 0


def test_empty_import(tmp_path):
    manifest, report = import_items([], tmp_path, "empty")
    assert manifest.row_count == 0
    assert manifest.buckets == []
    assert report.imported == 0


def test_reimport_is_byte_identical(tmp_path):
    records = make_records(1000)
    m1, _ = import_items(records, tmp_path / "a", "d", bucket_capacity=64)
    m2, _ = import_items(records, tmp_path / "b", "d", bucket_capacity=64)
    assert [b.digest for b in m1.buckets] == [b.digest for b in m2.buckets]
    for b1, b2 in zip(m1.buckets, m2.buckets):
        blob1 = (tmp_path / "a" / "d" / b1.path).read_bytes()
        blob2 = (tmp_path / "b" / "d" / b2.path).read_bytes()
        assert blob1 == blob2


def test_malformed_records_skipped_and_counted(tmp_path):
    records = make_records(5)
    records.insert(2, {"external_id": "x"})  # missing fields
    records.insert(4, None)  # undecodable line stand-in
    records.append({"external_id": 7, "url": "u", "title": "t", "body_text": "b"})
    manifest, report = import_items(records, tmp_path, "d")
    assert report.imported == 5
    assert report.skipped == 3
    assert manifest.row_count == 5


def test_append_extends_row_space(tmp_path):
    import_items(make_records(10), tmp_path, "d", bucket_capacity=4)
    store = RawStore.open(tmp_path, "d")
    digest_before = store.manifest.buckets[0].digest
    updated, report = append_records(store, make_records(3), bucket_capacity=4)
    assert updated.row_count == 13
    assert report.imported == 3
    new = updated.buckets[-1]
    assert (new.start_row_id, new.row_count) == (10, 3)
    # prior buckets untouched, byte-verified
    assert updated.buckets[0].digest == digest_before
    reopened = RawStore.open(tmp_path, "d")
    reopened.fetch_raw(0)  # digest check happens on load
    assert reopened.manifest.buckets[0].digest == digest_before


def test_append_to_empty_dataset(tmp_path):
    import_items([], tmp_path, "d")
    store = RawStore.open(tmp_path, "d")
    updated, _ = append_records(store, make_records(2))
    assert [b.start_row_id for b in updated.buckets] == [0]
    assert updated.row_count == 2


def test_fetch_raw_round_trip(tmp_path):
    records = make_records(1)
    import_items(records, tmp_path, "d")
    store = RawStore.open(tmp_path, "d")
    assert store.fetch_raw(0) == canonical_record_bytes(records[0])
    with pytest.raises(RowOutOfRange):
        store.fetch_raw(1)


def test_fetch_matches_source_at_random_rows(tmp_path):
    records = make_records(200)
    import_items(records, tmp_path, "d", bucket_capacity=17)
    store = RawStore.open(tmp_path, "d")
    rng = random.Random(7)
    for _ in range(50):
        r = rng.randrange(200)
        assert store.fetch_raw(r) == canonical_record_bytes(records[r])
        assert store.fetch_record(r) == records[r]


def test_bucket_lookup_matches_linear_scan(tmp_path):
    manifest, _ = import_items(make_records(137), tmp_path, "d", bucket_capacity=11)
    for r in range(137):
        expected = next(
            b for b in manifest.buckets if b.start_row_id <= r < b.start_row_id + b.row_count
        )
        assert manifest.bucket_for_row(r) is expected


def test_corruption_detected(tmp_path):
    import_items(make_records(10), tmp_path, "d", bucket_capacity=10)
    store = RawStore.open(tmp_path, "d")
    path = store.dataset_dir / store.manifest.buckets[0].path
    blob = bytearray(path.read_bytes())
    blob[10] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CorruptBucket):
        store.fetch_raw(0)


def test_reimport_over_existing_dataset_rejected(tmp_path):
    import_items(make_records(3), tmp_path, "d")
    with pytest.raises(ImmutabilityViolation):
        import_items(make_records(3), tmp_path, "d")


def test_write_failure_publishes_nothing(tmp_path):
    from labelloop.raw_store import ImportFailed

    blocker = tmp_path / "blocked"
    blocker.write_text("a file where the output directory should go")
    with pytest.raises(ImportFailed):
        import_items(make_records(5), blocker, "d")
    assert not (blocker / "d" / "manifest").exists() if blocker.is_dir() else True
    assert blocker.is_file()  # nothing was published


def test_manifest_text_round_trip(tmp_path):
    manifest, _ = import_items(make_records(10), tmp_path, "d", bucket_capacity=4)
    parsed = DatasetManifest.from_text(manifest.to_text())
    assert parsed == manifest


def test_record_bytes_are_canonical_json(tmp_path):
    rec = make_records(1)[0]
    parsed = json.loads(canonical_record_bytes(rec))
    assert parsed == rec
