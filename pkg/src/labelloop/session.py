"""Event-sourced session state.

Every teacher action lands in an append-only, length-prefixed, digest-chained
log file before it is acknowledged; all session state (current labels,
feature versions, metrics history) is a pure fold of the log prefix, so any
past point in time can be reconstructed exactly.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .hashing import chain_digest, stable_hash

EVENT_KINDS = (
    "label_submitted",
    "label_edited",
    "feature_added",
    "feature_edited",
    "feature_removed",
    "query_issued",
    "sample_drawn",
    "model_trained",
)

POSITIVE = "positive"
NEGATIVE = "negative"
LABELS = (POSITIVE, NEGATIVE)

SPLIT_MOD = 10**6
CHAIN_SEED = "0" * 16


class LogCorruption(RuntimeError):
    pass


@dataclass(frozen=True)
class SessionEvent:
    sequence: int
    timestamp: float
    kind: str
    payload: dict

    def to_json(self) -> dict:
        return {
            "sequence": self.sequence,
            "timestamp": self.timestamp,
            "kind": self.kind,
            "payload": self.payload,
        }


@dataclass(frozen=True)
class SplitAssignment:
    """Deterministic train/test assignment keyed only by (row, salt, ratio)."""

    ratio: float
    salt: int

    def side(self, row_id: int) -> str:
        if not (0 < self.ratio <= 1):
            raise ValueError("ratio must be in (0, 1]")
        return "train" if stable_hash(row_id, self.salt) % SPLIT_MOD < self.ratio * SPLIT_MOD else "test"

    def is_train(self, row_id: int) -> bool:
        return self.side(row_id) == "train"


class SessionLog:
    """Append-only log: `<length>\\n<json body>\\n` records with a digest chain.

    Each body carries the previous record's chain digest, so truncation or
    in-place edits are detected on read. Appends are flushed (and optionally
    fsynced) before the new sequence number is returned.
    """

    def __init__(self, path: str | Path, sync: bool = True):
        self.path = Path(path)
        self.sync = sync
        self._last_seq = 0
        self._last_digest = CHAIN_SEED
        if self.path.exists():
            for _ in self.read_events():
                pass  # verifies the chain and positions the tail
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.touch()

    def append(self, kind: str, payload: dict, timestamp: float | None = None) -> SessionEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = SessionEvent(
            sequence=self._last_seq + 1,
            timestamp=time.time() if timestamp is None else timestamp,
            kind=kind,
            payload=payload,
        )
        body = dict(event.to_json(), prev=self._last_digest)
        data = json.dumps(body, sort_keys=True, ensure_ascii=False).encode("utf-8")
        frame = str(len(data)).encode("ascii") + b"\n" + data + b"\n"
        with open(self.path, "ab") as fh:
            fh.write(frame)
            fh.flush()
            if self.sync:
                os.fsync(fh.fileno())
        self._last_seq = event.sequence
        self._last_digest = chain_digest(self._last_digest, data)
        return event

    def read_events(self) -> list[SessionEvent]:
        """Read and verify the whole log; also refreshes the tail pointers."""
        events: list[SessionEvent] = []
        digest = CHAIN_SEED
        blob = self.path.read_bytes()
        pos = 0
        while pos < len(blob):
            newline = blob.find(b"\n", pos)
            if newline < 0:
                raise LogCorruption("truncated length header")
            try:
                length = int(blob[pos:newline])
            except ValueError as exc:
                raise LogCorruption(f"bad length header at byte {pos}") from exc
            start = newline + 1
            end = start + length
            if end + 1 > len(blob):
                raise LogCorruption("truncated record payload")
            data = blob[start:end]
            body = json.loads(data)
            if body.get("prev") != digest:
                raise LogCorruption(f"chain mismatch at sequence {body.get('sequence')}")
            event = SessionEvent(body["sequence"], body["timestamp"], body["kind"], body["payload"])
            if event.sequence != len(events) + 1:
                raise LogCorruption(f"sequence gap at {event.sequence}")
            events.append(event)
            digest = chain_digest(digest, data)
            pos = end + 1
        self._last_seq = len(events)
        self._last_digest = digest
        return events

    @property
    def last_sequence(self) -> int:
        return self._last_seq


def current_labels(events: list[SessionEvent], at_sequence: int | None = None) -> dict[int, str]:
    """Fold label events up to a sequence; edits supersede, never erase."""
    out: dict[int, str] = {}
    for event in events:
        if at_sequence is not None and event.sequence > at_sequence:
            break
        if event.kind in ("label_submitted", "label_edited"):
            out[event.payload["row_id"]] = event.payload["label"]
    return out


@dataclass
class MetricsEntry:
    sequence: int
    model_version: int
    reg_strength: float
    train_metrics: dict
    test_metrics: dict
    positives: int
    negatives: int
    trigger: str

    @classmethod
    def from_payload(cls, sequence: int, payload: dict) -> MetricsEntry:
        return cls(
            sequence=sequence,
            model_version=payload["model_version"],
            reg_strength=payload["reg_strength"],
            train_metrics=payload["train_metrics"],
            test_metrics=payload["test_metrics"],
            positives=payload["positives"],
            negatives=payload["negatives"],
            trigger=payload["trigger"],
        )


@dataclass
class SessionState:
    """The replayable view: everything here is a pure function of the log."""

    labels: dict[int, str] = field(default_factory=dict)
    label_sequence: dict[int, int] = field(default_factory=dict)  # row -> last label event
    label_sources: dict[int, str] = field(default_factory=dict)
    feature_versions: list[tuple[str, int]] = field(default_factory=list)  # full history
    active_features: list[tuple[str, int]] = field(default_factory=list)
    model_versions: list[int] = field(default_factory=list)
    metrics_history: list[MetricsEntry] = field(default_factory=list)
    queries: list[str] = field(default_factory=list)

    def apply(self, event: SessionEvent) -> None:
        kind, payload = event.kind, event.payload
        if kind in ("label_submitted", "label_edited"):
            row = payload["row_id"]
            self.labels[row] = payload["label"]
            self.label_sequence[row] = event.sequence
            self.label_sources[row] = payload.get("source", "manual")
        elif kind in ("feature_added", "feature_edited"):
            entry = (payload["name"], payload["version"])
            self.feature_versions.append(entry)
            self.active_features = [
                (n, v) for n, v in self.active_features if n != payload["name"]
            ]
            self.active_features.append(entry)
        elif kind == "feature_removed":
            self.active_features = [
                (n, v) for n, v in self.active_features if n != payload["name"]
            ]
        elif kind == "model_trained":
            self.model_versions.append(payload["model_version"])
            self.metrics_history.append(MetricsEntry.from_payload(event.sequence, payload))
        elif kind == "query_issued":
            self.queries.append(payload["query"])

    @classmethod
    def replay(cls, events: list[SessionEvent], at_sequence: int | None = None) -> SessionState:
        state = cls()
        for event in events:
            if at_sequence is not None and event.sequence > at_sequence:
                break
            state.apply(event)
        return state

    def label_counts(self) -> tuple[int, int]:
        pos = sum(1 for v in self.labels.values() if v == POSITIVE)
        return pos, len(self.labels) - pos


REVIEW_FILTERS = ("all", "false_positive", "false_negative", "disagreement")
REVIEW_SORTS = ("score", "recency", "row_id")


@dataclass
class ReviewItem:
    row_id: int
    label: str
    probability: float
    predicted: str
    label_sequence: int


def review_query(
    state: SessionState,
    probabilities: dict[int, float],
    which: str = "all",
    sort_key: str = "score",
    threshold: float = 0.5,
) -> list[ReviewItem]:
    """Labeled rows joined with current predictions, filtered and sorted.

    false_positive = labeled negative but predicted positive; false_negative
    is symmetric; disagreement is their union.
    """
    if which not in REVIEW_FILTERS:
        raise ValueError(f"unknown review filter {which!r}")
    if sort_key not in REVIEW_SORTS:
        raise ValueError(f"unknown sort key {sort_key!r}")
    items = []
    for row, label in state.labels.items():
        p = probabilities[row]
        predicted = POSITIVE if p >= threshold else NEGATIVE
        wrong = predicted != label
        if which == "false_positive" and not (wrong and predicted == POSITIVE):
            continue
        if which == "false_negative" and not (wrong and predicted == NEGATIVE):
            continue
        if which == "disagreement" and not wrong:
            continue
        items.append(ReviewItem(row, label, p, predicted, state.label_sequence[row]))
    if sort_key == "score":
        items.sort(key=lambda it: (-it.probability, it.row_id))
    elif sort_key == "recency":
        items.sort(key=lambda it: -it.label_sequence)
    else:
        items.sort(key=lambda it: it.row_id)
    return items
