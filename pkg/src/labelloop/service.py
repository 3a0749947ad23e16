"""The interactive loop: search, label, feature, train, score, sample.

One service owns an engine (and its text index) plus any number of teaching
sessions. Per-session mutations serialize through a session lock; scoring
runs as an interruptible background pass (or synchronously, for deterministic
harness runs) and never blocks label submission or sampling.
"""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import engine as eng
from .engine import ColumnDef, ColumnKind, Engine, ValueType
from .export import build_export, export_to_text
from .features import (
    BowTfidfFeature,
    DictionaryFeature,
    FeatureDefinition,
    FeatureError,
    FeatureSpace,
    FeatureVersion,
    ModelScoreFeature,
    build_bow_vocabulary,
)
from .hashing import stable_hash
from .metrics import evaluate
from .session import (
    NEGATIVE,
    POSITIVE,
    MetricsEntry,
    SessionLog,
    SessionState,
    SplitAssignment,
    review_query,
)
from .text_index import TextIndex
from .tokens import tokenize
from .trainer import LinearModel, TrainerFamily, TrainingSet, train_family

DEFAULT_RETRAIN_THRESHOLD = 1
DEFAULT_SPLIT_RATIO = 0.7


class UnknownSession(KeyError):
    pass


class UnknownRow(ValueError):
    pass


class ColdStartError(RuntimeError):
    """Score-range sampling needs a model; search or uniform work cold."""


class NoModelError(RuntimeError):
    pass


@dataclass
class SampleRequest:
    strategy: str  # "score_range" | "uniform_unlabeled" | "search"
    count: int = 10
    lo: float = 0.0
    hi: float = 1.0
    query: str = ""
    exclude_labeled: bool = True
    restrict_to: tuple[int, ...] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not (0.0 <= self.lo <= self.hi <= 1.0):
            raise ValueError("score range must satisfy 0 <= lo <= hi <= 1")


@dataclass
class SampledItem:
    row_id: int
    title: str
    excerpt: str
    score: float | None
    pre_label: str | None
    moved: bool = False

    def to_dict(self) -> dict:
        return {
            "row_id": self.row_id,
            "title": self.title,
            "excerpt": self.excerpt,
            "score": self.score,
            "pre_label": self.pre_label,
            "moved": self.moved,
        }


@dataclass
class ModelRecord:
    model: LinearModel
    feature_column: str
    feature_versions: tuple[FeatureVersion, ...]
    dim: int


@dataclass
class TeachSession:
    session_id: str
    log: SessionLog
    state: SessionState
    space: FeatureSpace
    split: SplitAssignment
    retrain_threshold: int
    family: TrainerFamily
    score_column: str
    salt: int
    pending_labels: int = 0
    latest_version: int = 0
    models: dict[int, ModelRecord] = field(default_factory=dict)
    lock: threading.RLock = field(default_factory=threading.RLock)
    scorer_thread: threading.Thread | None = None
    last_pass: Any = None

    @property
    def latest(self) -> ModelRecord | None:
        return self.models.get(self.latest_version)

    def scorer_status(self) -> str:
        if self.scorer_thread is not None and self.scorer_thread.is_alive():
            return "scoring"
        if self.last_pass is not None and self.last_pass.interrupted and not self.last_pass.done:
            return "interrupted"
        return "idle"


class LoopService:
    def __init__(
        self,
        engine: Engine,
        sessions_dir: str | Path,
        scoring: str = "background",
        sync_log: bool = True,
        slow_chunk_hook=None,
    ):
        if scoring not in ("background", "sync"):
            raise ValueError("scoring mode must be 'background' or 'sync'")
        self.engine = engine
        self.sessions_dir = Path(sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self.scoring = scoring
        self.sync_log = sync_log
        self.slow_chunk_hook = slow_chunk_hook
        self.sessions: dict[str, TeachSession] = {}
        self._vocab_cache: dict[tuple[str, int, int], Any] = {}
        engine.register_fn("tokenize", tokenize)
        for column in engine.store.manifest.columns:
            engine.define_lambda(
                ColumnDef(f"tokens:{column}", ColumnKind.LAMBDA, ValueType.TOKENS,
                          deps=(column,), fn="tokenize")
            )
        self._index: TextIndex | None = None
        self._index_column = "body_text"

    # -- dataset-level reads -------------------------------------------------

    @property
    def dataset_id(self) -> str:
        return self.engine.store.manifest.dataset_id

    def index(self) -> TextIndex:
        if self._index is None:
            shard_docs = []
            for shard in self.engine.shards:
                tokens = self.engine.values(f"tokens:{self._index_column}", shard)
                shard_docs.append(list(zip(range(shard.start_row, shard.end_row), tokens)))
            self._index = TextIndex.build(shard_docs)
        return self._index

    def search(self, query: str, k: int) -> list[dict]:
        live = {s.shard_id for s in self.engine.live_shards()}
        hits = self.index().search(query, k, live=live)
        out = []
        for row_id, score in hits:
            row = self.engine.get_row(row_id, ["title", "body_text"])
            out.append(
                {
                    "row_id": row_id,
                    "score": score,
                    "title": row["title"],
                    "excerpt": row["body_text"][:200],
                }
            )
        return out

    def item(self, row_id: int, session_id: str | None = None) -> dict:
        columns = ["external_id", "url", "title", "body_text"]
        row = self.engine.get_row(row_id, columns)
        out = {name: row[name] for name in columns}
        out["row_id"] = row_id
        out["recomputed"] = row["recomputed"]
        if session_id:
            session = self._session(session_id)
            record = session.latest
            if record is not None:
                out["score"] = self._fresh_scores(record, [row_id])[0]
                vector = self.feature_vector(record.feature_column, row_id)
                names = {}
                for fv in record.feature_versions:
                    for coord, name in zip(fv.coord_ids, fv.coord_names()):
                        if coord in vector:
                            names[name] = vector[coord]
                out["features"] = names
            out["label"] = session.state.labels.get(row_id)
            out["dictionary_hits"] = self._dictionary_hits(session, row["body_text"])
        return out

    def _dictionary_hits(self, session: TeachSession, text: str) -> dict[str, list[str]]:
        hits: dict[str, list[str]] = {}
        tokens = set(tokenize(text))
        for fv in session.space.active:
            d = fv.definition
            if isinstance(d, DictionaryFeature):
                present = sorted(tokens & d.entries)
                if present:
                    hits[d.name] = present
        return hits

    # -- session lifecycle ---------------------------------------------------

    def create_session(
        self,
        features: list[FeatureDefinition | dict] | None = None,
        split_ratio: float = DEFAULT_SPLIT_RATIO,
        retrain_threshold: int = DEFAULT_RETRAIN_THRESHOLD,
        family: TrainerFamily | None = None,
        session_id: str | None = None,
        salt: int | None = None,
    ) -> str:
        session_id = session_id or uuid.uuid4().hex[:12]
        if session_id in self.sessions:
            raise ValueError(f"session {session_id!r} already exists")
        salt = stable_hash(session_id) if salt is None else salt
        log = SessionLog(self.sessions_dir / session_id / "events.log", sync=self.sync_log)
        session = TeachSession(
            session_id=session_id,
            log=log,
            state=SessionState(),
            space=FeatureSpace(),
            split=SplitAssignment(ratio=split_ratio, salt=salt),
            retrain_threshold=retrain_threshold,
            family=family or TrainerFamily(),
            score_column=f"score:{session_id}",
            salt=salt,
        )
        self.engine.add_score_column(session.score_column, session_id=session_id)
        self.sessions[session_id] = session
        for feature in features or []:
            self.feature_edit(session_id, "add", feature)
        return session_id

    def _session(self, session_id: str) -> TeachSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"unknown session {session_id!r}")
        return session

    # -- features -------------------------------------------------------

    def resolve_feature(self, session_id: str, spec: FeatureDefinition | dict) -> FeatureDefinition:
        """Accept either a definition object or a wire-format dict."""
        if not isinstance(spec, dict):
            return spec
        kind = spec.get("type")
        if kind == "dictionary":
            return DictionaryFeature.from_words(
                spec["name"],
                spec["entries"],
                stat_modes=tuple(spec.get("stat_modes", ("total_count", "distinct_count", "binary_presence"))),
                source_column=spec.get("source_column", "body_text"),
            )
        if kind == "bow_tfidf":
            return self.build_bow_feature(
                name=spec["name"],
                cap=int(spec.get("cap", 10_000)),
                max_n=int(spec.get("max_n", 2)),
                source_column=spec.get("source_column", "body_text"),
            )
        if kind == "model_score":
            ref_session = self._session(spec["session_id"])
            version = int(spec["model_version"])
            doc = self._export_doc(ref_session, version)
            return ModelScoreFeature(name=spec["name"], export_doc=doc)
        raise FeatureError(f"unknown feature type {kind!r}")

    def build_bow_feature(
        self, name: str, cap: int = 10_000, max_n: int = 2, source_column: str = "body_text"
    ) -> BowTfidfFeature:
        """Mine the vocabulary from the loaded corpus (cached per parameters)."""
        key = (source_column, cap, max_n)
        vocab = self._vocab_cache.get(key)
        if vocab is None:
            def shard_tokens():
                for shard in self.engine.shards:
                    yield from self.engine.values(f"tokens:{source_column}", shard)

            vocab = build_bow_vocabulary(shard_tokens(), cap=cap, max_n=max_n)
            self._vocab_cache[key] = vocab
        return BowTfidfFeature(name=name, vocab=vocab, source_column=source_column)

    def feature_edit(
        self, session_id: str, action: str, spec: FeatureDefinition | dict | str
    ) -> dict:
        """Add/edit/remove a feature; retraining starts immediately (edits
        bypass the label threshold)."""
        session = self._session(session_id)
        with session.lock:
            if action == "remove":
                name = spec if isinstance(spec, str) else spec["name"]  # type: ignore[index]
                fv = session.space.remove(name)
                event_kind = "feature_removed"
                payload = {"name": fv.name, "version": fv.version}
            else:
                definition = self.resolve_feature(session_id, spec)
                if action == "add":
                    fv = session.space.add(definition)
                    event_kind = "feature_added"
                elif action == "edit":
                    fv = session.space.edit(definition.name, definition)
                    event_kind = "feature_edited"
                else:
                    raise ValueError(f"unknown feature action {action!r}")
                payload = {
                    "name": fv.name,
                    "version": fv.version,
                    "base_id": fv.base_id,
                    "width": fv.width,
                    "definition_digest": session.space.content_digest(),
                }
                if isinstance(definition, DictionaryFeature):
                    payload["entries"] = sorted(definition.entries)
                    payload["stat_modes"] = list(definition.stat_modes)
            event = session.log.append(event_kind, payload)
            session.state.apply(event)
            retrained = self._retrain(session, trigger="feature_edit")
        return {
            "name": payload["name"],
            "version": payload["version"],
            "model_version": session.latest_version,
            "retrained": retrained,
        }

    def _feature_column(self, session: TeachSession) -> tuple[str, int]:
        """Register (idempotently) the assembled sparse column for the current
        active feature set; returns (column name, dimension)."""
        digest = session.space.content_digest()
        name = f"features:{digest}"
        dim = session.space.dim
        if name in self.engine.columns:
            return name, self.engine.columns[name].dim
        stored = list(self.engine.store.manifest.columns)
        sources = sorted(session.space.source_columns())
        deps = tuple(stored) + tuple(f"tokens:{c}" for c in sources)
        versions = tuple(session.space.active)

        def assemble(*values):
            record = dict(zip(stored, values[: len(stored)]))
            tokens_by_column = dict(zip(sources, values[len(stored):]))
            out: dict[int, float] = {}
            for fv in versions:
                out.update(fv.compute(record, tokens_by_column))
            return out

        fn_name = f"assemble:{digest}"
        self.engine.register_fn(fn_name, assemble)
        self.engine.define_lambda(
            ColumnDef(name, ColumnKind.LAMBDA, ValueType.SPARSE, deps=deps, fn=fn_name, dim=dim)
        )
        return name, dim

    def feature_vector(self, feature_column: str, row_id: int) -> dict[int, float]:
        shard = self.engine.shard_for_row(row_id)
        if shard.alive:
            return self.engine.values(feature_column, shard)[row_id - shard.start_row]
        return self.engine.get_row(row_id, [feature_column])[feature_column]

    # -- labeling -------------------------------------------------------

    def submit_labels(
        self, session_id: str, labels: list[tuple[int, str]], source: str = "manual"
    ) -> dict:
        session = self._session(session_id)
        for row_id, label in labels:
            if not (0 <= row_id < self.engine.row_count):
                raise UnknownRow(f"row {row_id} does not exist; batch rejected")
            if label not in (POSITIVE, NEGATIVE):
                raise ValueError(f"label must be positive/negative, got {label!r}")
        with session.lock:
            for row_id, label in labels:
                kind = "label_edited" if row_id in session.state.labels else "label_submitted"
                event = session.log.append(
                    kind, {"row_id": row_id, "label": label, "source": source}
                )
                session.state.apply(event)
                session.pending_labels += 1
            retrained = False
            if session.pending_labels >= session.retrain_threshold:
                retrained = self._retrain(session, trigger="labels")
        return {
            "accepted": len(labels),
            "retrained": retrained,
            "model_version": session.latest_version,
            "pending_labels": session.pending_labels,
        }

    # -- training -------------------------------------------------------

    def _trainable(self, session: TeachSession) -> bool:
        train_labels = {
            row: label
            for row, label in session.state.labels.items()
            if session.split.is_train(row)
        }
        kinds = set(train_labels.values())
        return POSITIVE in kinds and NEGATIVE in kinds and bool(session.space.active)

    def _retrain(self, session: TeachSession, trigger: str) -> bool:
        if not self._trainable(session):
            return False
        column, dim = self._feature_column(session)
        rows = []
        test_rows = []
        for row, label in sorted(session.state.labels.items()):
            y = 1 if label == POSITIVE else -1
            vec = self.feature_vector(column, row)
            if session.split.is_train(row):
                rows.append((row, vec, y))
            else:
                test_rows.append((row, vec, y))
        train_set = TrainingSet.from_rows(rows, dim=dim)
        model, report = train_family(train_set, session.family, salt=session.salt)
        version = session.latest_version + 1
        model = model.with_version(version)
        record = ModelRecord(
            model=model,
            feature_column=column,
            feature_versions=tuple(session.space.active),
            dim=dim,
        )
        session.models[version] = record
        session.latest_version = version

        train_eval = evaluate(model.predict_batch(train_set.features), train_set.labels)
        if test_rows:
            test_set = TrainingSet.from_rows(test_rows, dim=dim)
            test_eval = evaluate(model.predict_batch(test_set.features), test_set.labels)
            test_metrics = test_eval.to_dict()
        else:
            test_metrics = {"auc": None, "positives": 0, "negatives": 0, "recall_at_p80": 0.0}
        pos, neg = session.state.label_counts()
        payload = {
            "model_version": version,
            "reg_strength": model.reg_strength,
            "cv": report.to_dict(),
            "train_metrics": train_eval.to_dict(),
            "test_metrics": test_metrics,
            "positives": pos,
            "negatives": neg,
            "trigger": trigger,
        }
        event = session.log.append("model_trained", payload)
        session.state.apply(event)
        session.pending_labels = 0
        self._start_scoring(session, record)
        return True

    def _start_scoring(self, session: TeachSession, record: ModelRecord) -> None:
        score_pass = self.engine.start_score_pass(
            session.score_column, record.model, record.feature_column
        )
        if self.slow_chunk_hook is not None:
            score_pass.on_chunk = self.slow_chunk_hook
        session.last_pass = score_pass
        if self.scoring == "sync":
            score_pass.run()
            return
        # The old writer must finish its in-flight chunk before a new pass
        # touches the column: one writer per score column, ever.
        if session.scorer_thread is not None and session.scorer_thread.is_alive():
            session.scorer_thread.join()
        thread = threading.Thread(target=score_pass.run, daemon=True,
                                  name=f"scorer-{session.session_id}-v{record.model.version}")
        session.scorer_thread = thread
        thread.start()

    def wait_for_scoring(self, session_id: str, timeout: float | None = None) -> None:
        session = self._session(session_id)
        if session.scorer_thread is not None:
            session.scorer_thread.join(timeout)

    # -- sampling -------------------------------------------------------

    def _fresh_scores(self, record: ModelRecord, rows: list[int]) -> list[float]:
        vectors = [self.feature_vector(record.feature_column, row) for row in rows]
        return [record.model.predict_vec(v) for v in vectors]

    def draw_sample(self, session_id: str, request: SampleRequest) -> list[SampledItem]:
        session = self._session(session_id)
        with session.lock:
            record = session.latest
            labeled = tuple(sorted(session.state.labels))
            if request.strategy == "score_range" and record is None:
                raise ColdStartError(
                    "no model yet: cold start must use search or uniform sampling"
                )
            seed = request.seed
            if seed is None:
                seed = stable_hash(session_id, session.log.last_sequence + 1, "sample") % (2**32)

            if request.strategy == "search":
                event = session.log.append(
                    "query_issued", {"query": request.query, "k": request.count}
                )
                session.state.apply(event)
                labeled_set = set(labeled) if request.exclude_labeled else set()
                hits = [
                    row
                    for row, _ in self.index().search(
                        request.query,
                        request.count + len(labeled_set),
                        live={s.shard_id for s in self.engine.live_shards()},
                    )
                    if row not in labeled_set
                ]
                rows = hits[: request.count]
            else:
                parts: list[eng.Predicate] = []
                if request.strategy == "score_range":
                    parts.append(eng.ScoreRange(session.score_column, request.lo, request.hi))
                elif request.strategy != "uniform_unlabeled":
                    raise ValueError(f"unknown strategy {request.strategy!r}")
                if request.exclude_labeled and labeled:
                    parts.append(eng.RowsNotIn(labeled))
                if request.restrict_to is not None:
                    parts.append(eng.RowsIn(tuple(request.restrict_to)))
                predicate = eng.And(tuple(parts)) if parts else None
                rows = self.engine.reservoir_sample(predicate, request.count, seed)

            items = []
            fresh = self._fresh_scores(record, rows) if record is not None else [None] * len(rows)
            for row, score in zip(rows, fresh):
                display = self.engine.get_row(row, ["title", "body_text"])
                moved = (
                    request.strategy == "score_range"
                    and score is not None
                    and not (request.lo <= score <= request.hi)
                )
                items.append(
                    SampledItem(
                        row_id=row,
                        title=display["title"],
                        excerpt=display["body_text"][:200],
                        score=score,
                        pre_label=None if score is None else (POSITIVE if score >= 0.5 else NEGATIVE),
                        moved=moved,
                    )
                )
            event = session.log.append(
                "sample_drawn",
                {"strategy": request.strategy, "count": request.count, "rows": [i.row_id for i in items]},
            )
            session.state.apply(event)
        return items

    # -- monitoring -----------------------------------------------------

    def status(self, session_id: str) -> dict:
        session = self._session(session_id)
        pos, neg = session.state.label_counts()
        return {
            "session_id": session_id,
            "dataset_id": self.dataset_id,
            "model_version": session.latest_version,
            "scorer_status": session.scorer_status(),
            "pending_labels": session.pending_labels,
            "retrain_threshold": session.retrain_threshold,
            "positives": pos,
            "negatives": neg,
            "cold_start": session.latest is None,
            "freshness": {str(k): v for k, v in
                          self.engine.score_freshness(session.score_column).items()},
            "features": [
                {"name": name, "version": version}
                for name, version in session.state.active_features
            ],
            "metrics_tail": [self._metrics_dict(m) for m in session.state.metrics_history[-5:]],
        }

    @staticmethod
    def _metrics_dict(entry: MetricsEntry) -> dict:
        return {
            "sequence": entry.sequence,
            "model_version": entry.model_version,
            "reg_strength": entry.reg_strength,
            "train": entry.train_metrics,
            "test": entry.test_metrics,
            "positives": entry.positives,
            "negatives": entry.negatives,
            "trigger": entry.trigger,
        }

    def metrics_history(self, session_id: str) -> list[dict]:
        session = self._session(session_id)
        return [self._metrics_dict(m) for m in session.state.metrics_history]

    def review(
        self, session_id: str, which: str = "all", sort_key: str = "score", threshold: float = 0.5
    ) -> list[dict]:
        session = self._session(session_id)
        record = session.latest
        if record is None:
            if which != "all":
                raise NoModelError("prediction filters need a trained model")
            probs = {row: 0.5 for row in session.state.labels}
        else:
            rows = sorted(session.state.labels)
            probs = dict(zip(rows, self._fresh_scores(record, rows)))
        items = review_query(session.state, probs, which, sort_key, threshold)
        return [
            {
                "row_id": it.row_id,
                "label": it.label,
                "probability": it.probability,
                "predicted": it.predicted,
                "title": self.engine.get_row(it.row_id, ["title"])["title"],
            }
            for it in items
        ]

    # -- export -----------------------------------------------------------

    def _export_doc(self, session: TeachSession, version: int) -> dict:
        record = session.models.get(version)
        if record is None:
            raise NoModelError(f"no trained model version {version}")
        space = FeatureSpace()
        space.active = list(record.feature_versions)  # frozen snapshot
        return build_export(record.model, space, self.dataset_id)

    def export_model(self, session_id: str, version: int) -> str:
        session = self._session(session_id)
        return export_to_text(self._export_doc(session, version))
