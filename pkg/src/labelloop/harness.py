"""Simulated-teacher harness.

Reproduces the interactive methodology with an oracle in place of the human:
seed the session by searching for a few known-positive words, label whatever
comes back, then alternate between the system sampling items and the oracle
labeling them, retraining after every batch. The corpus is synthetic and
lopsided: a small planted vocabulary marks positives, diluted by noise and by
hard negatives that carry a little planted vocabulary too.

All runs are deterministic given (seed, strategy): sampling seeds derive from
the harness seed and round number, the train/test split salt derives from the
corpus seed, and scoring runs synchronously.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .engine import Engine
from .hashing import stable_hash
from .metrics import evaluate
from .raw_store import RawStore, import_items
from .service import LoopService, SampleRequest
from .session import NEGATIVE, POSITIVE, SplitAssignment
from .trainer import TrainerFamily


@dataclass(frozen=True)
class CorpusSpec:
    """Lopsided corpus with a graded class boundary.

    Positives plant 2..6 marker tokens; a slice of negatives plants 1..3 of
    the same markers. The overlap makes the positive rate climb smoothly with
    marker count (~10% at two markers, ~50% at three, ~100% above), so a
    probability band around 0.5 selects genuinely ambiguous documents instead
    of being empty.
    """

    n_docs: int = 100_000
    positive_rate: float = 0.02
    noise_vocab: int = 3_000
    planted_vocab: int = 40
    doc_tokens: int = 32
    positive_marker_range: tuple[int, int] = (2, 6)  # inclusive, uniform
    # negative marker-count mix: fraction of ALL negatives carrying k markers
    negative_marker_rates: tuple[tuple[int, float], ...] = ((1, 0.12), (2, 0.035), (3, 0.004))


def planted_tokens(spec: CorpusSpec) -> list[str]:
    return [f"marker{i:02d}" for i in range(spec.planted_vocab)]


def build_corpus(spec: CorpusSpec, seed: int) -> tuple[list[dict], np.ndarray]:
    """Deterministic synthetic corpus; returns (records, oracle_labels)."""
    rng = np.random.default_rng(seed)
    noise = np.array([f"w{i:04d}" for i in range(spec.noise_vocab)])
    planted = np.array(planted_tokens(spec))

    labels = rng.random(spec.n_docs) < spec.positive_rate
    base = rng.integers(0, spec.noise_vocab, size=(spec.n_docs, spec.doc_tokens))
    lo, hi = spec.positive_marker_range

    records = []
    for i in range(spec.n_docs):
        tokens = list(noise[base[i]])
        if labels[i]:
            k = int(rng.integers(lo, hi + 1))
        else:
            k = 0
            u = rng.random()
            acc = 0.0
            for count, rate in spec.negative_marker_rates:
                acc += rate
                if u < acc:
                    k = count
                    break
        if k:
            for slot, token in enumerate(rng.choice(planted, size=k, replace=False)):
                tokens[slot] = str(token)
        records.append(
            {
                "external_id": f"doc-{i}",
                "url": f"synthetic://corpus/{i}",
                "title": f"item {i}",
                "body_text": " ".join(tokens),
            }
        )
    return records, labels


@dataclass
class HarnessConfig:
    strategy: str = "active"  # "active" (score-range band) | "uniform"
    label_budget: int = 1_000
    batch_size: int = 20
    band: tuple[float, float] = (0.4, 0.6)
    seed: int = 0
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    seed_queries: tuple[str, ...] | None = None
    target_precision: float = 0.8
    target_recall: float = 0.5
    split_ratio: float = 0.7
    bow_cap: int = 4_000
    ngram_max: int = 1
    reg_grid: tuple[float, ...] = (0.01,)
    folds: int = 3
    stop_at_target: bool = False

    def queries(self) -> tuple[str, ...]:
        if self.seed_queries is not None:
            return self.seed_queries
        tokens = planted_tokens(self.corpus)
        return (" ".join(tokens[0:3]), " ".join(tokens[3:6]), " ".join(tokens[6:9]))


@dataclass
class RoundRecord:
    round: int
    labels_used: int
    model_version: int
    test_auc: float | None
    recall_at_target_precision: float
    reached: bool

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class ExperimentReport:
    strategy: str
    seed: int
    label_budget: int
    positives_in_corpus: int
    rounds: list[RoundRecord] = field(default_factory=list)
    labels_to_target: int | None = None
    labels_used: int = 0
    elapsed_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "label_budget": self.label_budget,
            "positives_in_corpus": self.positives_in_corpus,
            "labels_to_target": self.labels_to_target,
            "labels_used": self.labels_used,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "rounds": [r.to_dict() for r in self.rounds],
        }


class HarnessEnv:
    """A corpus imported, loaded, featurized, and evaluated once; runs for
    both strategies share it so paired comparisons see identical data."""

    def __init__(self, config: HarnessConfig, workdir: str | Path, shard_count: int = 4):
        self.config = config
        self.workdir = Path(workdir)
        records, self.oracle = build_corpus(config.corpus, config.seed)
        if not self.oracle.any():
            raise ValueError("corpus has no positives; nothing to teach")
        dataset_id = f"sim-{config.seed}"
        import_items(records, self.workdir / "data", dataset_id, bucket_capacity=10_000)
        store = RawStore.open(self.workdir / "data", dataset_id)
        self.engine = Engine(store, shard_count=shard_count)
        self.service = LoopService(
            self.engine, self.workdir / "sessions", scoring="sync", sync_log=False
        )
        self.split_salt = stable_hash("split", config.seed)
        split = SplitAssignment(ratio=config.split_ratio, salt=self.split_salt)
        self.test_rows = np.asarray(
            [r for r in range(self.engine.row_count) if not split.is_train(r)], dtype=np.int64
        )
        self.test_labels = np.where(self.oracle[self.test_rows], 1, -1)
        self._test_matrix_cache: dict[str, sp.csr_matrix] = {}
        self._run_counter = 0

    def _test_matrix(self, feature_column: str) -> sp.csr_matrix:
        cached = self._test_matrix_cache.get(feature_column)
        if cached is not None:
            return cached
        blocks = []
        for shard in self.engine.shards:
            local = self.test_rows[
                (self.test_rows >= shard.start_row) & (self.test_rows < shard.end_row)
            ] - shard.start_row
            blocks.append(self.engine.feature_matrix(feature_column, shard)[local])
        matrix = sp.vstack(blocks).tocsr()
        self._test_matrix_cache[feature_column] = matrix
        return matrix

    def evaluate_on_holdout(self, session_id: str):
        """Rank the held-out rows by the model's raw score. Recall-at-precision
        sweeps thresholds, so any strictly monotone score works; the step
        calibrator would only merge operating points, so it stays out of the
        oracle metric (it exists for cross-version comparability, not ranking).
        """
        session = self.service.sessions[session_id]
        record = session.latest
        predictions = record.model.raw_scores(self._test_matrix(record.feature_column))
        return evaluate(predictions, self.test_labels)

    def run(self, strategy: str | None = None) -> ExperimentReport:
        config = self.config
        strategy = strategy or config.strategy
        started = time.perf_counter()
        self._run_counter += 1
        session_id = self.service.create_session(
            features=[
                {
                    "type": "bow_tfidf",
                    "name": "bow",
                    "cap": config.bow_cap,
                    "max_n": config.ngram_max,
                }
            ],
            split_ratio=config.split_ratio,
            retrain_threshold=1,
            family=TrainerFamily(reg_grid=config.reg_grid, folds=config.folds),
            session_id=f"sim-{config.seed}-{strategy}-{self._run_counter}",
            salt=self.split_salt,
        )
        report = ExperimentReport(
            strategy=strategy,
            seed=config.seed,
            label_budget=config.label_budget,
            positives_in_corpus=int(self.oracle.sum()),
        )

        def oracle_label(row: int) -> str:
            return POSITIVE if self.oracle[row] else NEGATIVE

        def submit(rows: list[int], source: str) -> None:
            budget_left = config.label_budget - report.labels_used
            rows = rows[:budget_left]
            if not rows:
                return
            self.service.submit_labels(
                session_id, [(r, oracle_label(r)) for r in rows], source=source
            )
            report.labels_used += len(rows)

        def record_round(round_no: int) -> bool:
            session = self.service.sessions[session_id]
            if session.latest is None:
                return False
            holdout = self.evaluate_on_holdout(session_id)
            recall = holdout.recall_at_precision(config.target_precision)
            reached = recall >= config.target_recall
            report.rounds.append(
                RoundRecord(
                    round=round_no,
                    labels_used=report.labels_used,
                    model_version=session.latest_version,
                    test_auc=holdout.auc,
                    recall_at_target_precision=recall,
                    reached=reached,
                )
            )
            if reached and report.labels_to_target is None:
                report.labels_to_target = report.labels_used
            return reached

        # Cold start: reveal a-priori knowledge through seed searches, then
        # uniform draws until a first model exists.
        round_no = 0
        for query in config.queries():
            if report.labels_used >= config.label_budget:
                break
            if self.service.sessions[session_id].latest is not None:
                break
            items = self.service.draw_sample(
                session_id,
                SampleRequest(
                    strategy="search",
                    query=query,
                    count=config.batch_size,
                    seed=stable_hash(config.seed, strategy, "search", round_no) % 2**32,
                ),
            )
            submit([i.row_id for i in items], source="search")
            round_no += 1
        while (
            self.service.sessions[session_id].latest is None
            and report.labels_used < config.label_budget
        ):
            items = self.service.draw_sample(
                session_id,
                SampleRequest(
                    strategy="uniform_unlabeled",
                    count=config.batch_size,
                    seed=stable_hash(config.seed, strategy, "cold", round_no) % 2**32,
                ),
            )
            if not items:
                break
            submit([i.row_id for i in items], source="active_sample")
            round_no += 1

        reached = record_round(round_no) if self.service.sessions[session_id].latest else False

        while report.labels_used < config.label_budget and not (
            reached and config.stop_at_target
        ):
            round_no += 1
            request_seed = stable_hash(config.seed, strategy, "round", round_no) % 2**32
            if strategy == "active":
                items = self.service.draw_sample(
                    session_id,
                    SampleRequest(
                        strategy="score_range",
                        lo=config.band[0],
                        hi=config.band[1],
                        count=config.batch_size,
                        seed=request_seed,
                    ),
                )
                if not items:  # empty band: fall back to a uniform draw
                    items = self.service.draw_sample(
                        session_id,
                        SampleRequest(
                            strategy="uniform_unlabeled",
                            count=config.batch_size,
                            seed=request_seed,
                        ),
                    )
            elif strategy == "uniform":
                items = self.service.draw_sample(
                    session_id,
                    SampleRequest(
                        strategy="uniform_unlabeled",
                        count=config.batch_size,
                        seed=request_seed,
                    ),
                )
            else:
                raise ValueError(f"unknown strategy {strategy!r}")
            if not items:
                break
            submit([i.row_id for i in items], source="active_sample")
            reached = record_round(round_no)

        report.elapsed_seconds = time.perf_counter() - started
        return report


def run_simulated_teacher(config: HarnessConfig, workdir: str | Path) -> ExperimentReport:
    """Build the corpus environment and drive one full run."""
    if config.label_budget < 0:
        raise ValueError("label budget must be >= 0")
    env = HarnessEnv(config, workdir)
    if config.label_budget == 0:
        return ExperimentReport(
            strategy=config.strategy,
            seed=config.seed,
            label_budget=0,
            positives_in_corpus=int(env.oracle.sum()),
        )
    return env.run()


def write_report(report: ExperimentReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", "utf-8")
