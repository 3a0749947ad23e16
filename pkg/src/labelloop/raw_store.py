"""Append-only bucket storage for raw imported records.

Records are canonicalized to JSON bytes at import time and framed
length-prefixed inside one file per bucket. Buckets are immutable after
publication: appends only ever create new buckets, and every bucket carries a
content digest so readers can detect corruption. Row ids are dense, gapless,
and never renumbered.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .hashing import content_digest

RECORD_FIELDS = ("external_id", "url", "title", "body_text")
DEFAULT_BUCKET_CAPACITY = 10_000

_FRAME = struct.Struct(">I")
MANIFEST_HEADER = "labelloop-manifest 1"


class RowOutOfRange(IndexError):
    pass


class CorruptBucket(RuntimeError):
    pass


class ImmutabilityViolation(RuntimeError):
    pass


class ImportFailed(RuntimeError):
    pass


def canonical_record_bytes(record: dict) -> bytes:
    """The exact bytes a record is stored as (and served back as)."""
    slim = {name: record[name] for name in RECORD_FIELDS}
    return json.dumps(slim, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode(
        "utf-8"
    )


def validate_record(record: object) -> dict | None:
    """Return the record if well-formed, else None (caller counts the skip)."""
    if not isinstance(record, dict):
        return None
    for name in RECORD_FIELDS:
        if not isinstance(record.get(name), str):
            return None
    return record


@dataclass(frozen=True)
class BucketInfo:
    bucket_id: int
    start_row_id: int
    row_count: int
    path: str  # relative to the dataset directory
    digest: str

    @property
    def end_row_id(self) -> int:
        return self.start_row_id + self.row_count


@dataclass
class DatasetManifest:
    dataset_id: str
    columns: tuple[str, ...] = RECORD_FIELDS
    buckets: list[BucketInfo] = field(default_factory=list)

    @property
    def row_count(self) -> int:
        return sum(b.row_count for b in self.buckets)

    def bucket_for_row(self, row_id: int) -> BucketInfo:
        """Binary search over contiguous bucket ranges."""
        if row_id < 0 or row_id >= self.row_count:
            raise RowOutOfRange(f"row {row_id} not in [0, {self.row_count})")
        lo, hi = 0, len(self.buckets) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.buckets[mid].end_row_id <= row_id:
                lo = mid + 1
            else:
                hi = mid
        return self.buckets[lo]

    def to_text(self) -> str:
        lines = [MANIFEST_HEADER, f"dataset {self.dataset_id}", "columns " + " ".join(self.columns)]
        for b in self.buckets:
            lines.append(f"bucket {b.bucket_id} {b.start_row_id} {b.row_count} {b.path} {b.digest}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> DatasetManifest:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != MANIFEST_HEADER:
            raise ValueError("not a labelloop manifest")
        manifest = cls(dataset_id="", columns=(), buckets=[])
        for line in lines[1:]:
            kind, _, rest = line.partition(" ")
            if kind == "dataset":
                manifest.dataset_id = rest
            elif kind == "columns":
                manifest.columns = tuple(rest.split())
            elif kind == "bucket":
                bid, start, count, path, digest = rest.split()
                manifest.buckets.append(
                    BucketInfo(int(bid), int(start), int(count), path, digest)
                )
            else:
                raise ValueError(f"unknown manifest line: {line!r}")
        return manifest


@dataclass
class ImportReport:
    imported: int = 0
    skipped: int = 0


def _frame_records(payloads: list[bytes]) -> bytes:
    parts = []
    for payload in payloads:
        parts.append(_FRAME.pack(len(payload)))
        parts.append(payload)
    return b"".join(parts)


def _unframe_records(blob: bytes) -> list[bytes]:
    records = []
    pos = 0
    while pos < len(blob):
        if pos + _FRAME.size > len(blob):
            raise CorruptBucket("truncated frame header")
        (length,) = _FRAME.unpack_from(blob, pos)
        pos += _FRAME.size
        if pos + length > len(blob):
            raise CorruptBucket("truncated record payload")
        records.append(blob[pos : pos + length])
        pos += length
    return records


class RawStore:
    """Read access to one dataset's buckets under a root directory."""

    def __init__(self, root: str | Path, manifest: DatasetManifest):
        self.root = Path(root)
        self.manifest = manifest
        self._bucket_cache: dict[int, list[bytes]] = {}

    @classmethod
    def open(cls, root: str | Path, dataset_id: str) -> RawStore:
        root = Path(root)
        manifest_path = root / dataset_id / "manifest"
        manifest = DatasetManifest.from_text(manifest_path.read_text("utf-8"))
        return cls(root, manifest)

    @property
    def dataset_dir(self) -> Path:
        return self.root / self.manifest.dataset_id

    @property
    def row_count(self) -> int:
        return self.manifest.row_count

    def _load_bucket(self, info: BucketInfo) -> list[bytes]:
        cached = self._bucket_cache.get(info.bucket_id)
        if cached is not None:
            return cached
        blob = (self.dataset_dir / info.path).read_bytes()
        if content_digest(blob) != info.digest:
            raise CorruptBucket(f"digest mismatch for bucket {info.bucket_id}")
        records = _unframe_records(blob)
        if len(records) != info.row_count:
            raise CorruptBucket(
                f"bucket {info.bucket_id} holds {len(records)} records, expected {info.row_count}"
            )
        self._bucket_cache[info.bucket_id] = records
        return records

    def fetch_raw(self, row_id: int) -> bytes:
        """The exact bytes imported for this row."""
        info = self.manifest.bucket_for_row(row_id)
        return self._load_bucket(info)[row_id - info.start_row_id]

    def fetch_record(self, row_id: int) -> dict:
        return json.loads(self.fetch_raw(row_id))

    def iter_records(self) -> Iterator[dict]:
        for info in self.manifest.buckets:
            for payload in self._load_bucket(info):
                yield json.loads(payload)

    def drop_cache(self) -> None:
        self._bucket_cache.clear()


def _write_buckets(
    dataset_dir: Path,
    source: Iterable[dict],
    bucket_capacity: int,
    start_row: int,
    start_bucket: int,
    report: ImportReport,
) -> list[BucketInfo]:
    if bucket_capacity < 1:
        raise ValueError("bucket_capacity must be >= 1")
    dataset_dir.mkdir(parents=True, exist_ok=True)
    buckets: list[BucketInfo] = []
    pending: list[bytes] = []
    next_row = start_row
    next_bucket = start_bucket

    def flush() -> None:
        nonlocal next_row, next_bucket, pending
        if not pending:
            return
        blob = _frame_records(pending)
        path = f"bucket-{next_bucket:06d}.dat"
        target = dataset_dir / path
        if target.exists():
            raise ImmutabilityViolation(f"bucket file already exists: {target}")
        target.write_bytes(blob)
        buckets.append(
            BucketInfo(next_bucket, next_row, len(pending), path, content_digest(blob))
        )
        next_row += len(pending)
        next_bucket += 1
        pending = []

    for raw in source:
        record = validate_record(raw)
        if record is None:
            report.skipped += 1
            continue
        pending.append(canonical_record_bytes(record))
        report.imported += 1
        if len(pending) == bucket_capacity:
            flush()
    flush()
    return buckets


def _publish_manifest(dataset_dir: Path, manifest: DatasetManifest) -> None:
    tmp = dataset_dir / "manifest.tmp"
    tmp.write_text(manifest.to_text(), "utf-8")
    tmp.replace(dataset_dir / "manifest")


def import_items(
    source: Iterable[dict],
    out_dir: str | Path,
    dataset_id: str,
    bucket_capacity: int = DEFAULT_BUCKET_CAPACITY,
) -> tuple[DatasetManifest, ImportReport]:
    """Import records into a fresh dataset; publishes the manifest last.

    Malformed records are skipped and counted in the report. On write failure
    nothing is published: a dataset either appears complete or not at all.
    """
    dataset_dir = Path(out_dir) / dataset_id
    if (dataset_dir / "manifest").exists():
        raise ImmutabilityViolation(f"dataset {dataset_id!r} already exists under {out_dir}")
    report = ImportReport()
    try:
        buckets = _write_buckets(dataset_dir, source, bucket_capacity, 0, 0, report)
    except ImmutabilityViolation:
        raise
    except OSError as exc:
        raise ImportFailed(f"import aborted, no manifest published: {exc}") from exc
    manifest = DatasetManifest(dataset_id=dataset_id, buckets=buckets)
    _publish_manifest(dataset_dir, manifest)
    return manifest, report


def append_records(
    store: RawStore,
    source: Iterable[dict],
    bucket_capacity: int = DEFAULT_BUCKET_CAPACITY,
) -> tuple[DatasetManifest, ImportReport]:
    """Append new rows after row id N; existing buckets are untouched."""
    manifest = store.manifest
    report = ImportReport()
    start_bucket = manifest.buckets[-1].bucket_id + 1 if manifest.buckets else 0
    buckets = _write_buckets(
        store.dataset_dir, source, bucket_capacity, manifest.row_count, start_bucket, report
    )
    updated = DatasetManifest(
        dataset_id=manifest.dataset_id,
        columns=manifest.columns,
        buckets=list(manifest.buckets) + buckets,
    )
    _publish_manifest(store.dataset_dir, updated)
    store.manifest = updated
    return updated, report


def read_jsonl(path: str | Path) -> Iterator[object]:
    """Line-delimited JSON records; undecodable lines yield None (skipped)."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError:
                yield None
