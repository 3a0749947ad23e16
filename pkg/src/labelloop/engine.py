"""In-memory, shard-partitioned column store.

Buckets from the raw store are assigned to shards in contiguous, balanced
ranges; every column for a row lives on that row's shard. Columns are either
stored (materialized from raw records at load), lambda (pure functions of
other columns, recomputable on demand), broadcast scalars (wrapped
aggregation results), or score columns (probability + model-version pairs
overwritten in place by a wrapping, interruptible scorer cursor).

Aggregations are associative folds: shards compute partials in parallel and
partials merge in shard order. Dead shards are skipped by aggregations
(coverage reports how much data answered) but single-row reads always
succeed by recomputing from the raw store plus lambda replay.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Iterable

import numpy as np
import scipy.sparse as sp

from .raw_store import RawStore, RowOutOfRange

SCORE_CHUNK_ROWS = 1024


class ColumnError(KeyError):
    pass


class CycleError(ValueError):
    pass


class StaleModelVersion(ValueError):
    pass


class AggregationError(ValueError):
    pass


class UnavailableError(RuntimeError):
    """Raised when a dead shard's data cannot be recomputed from raw storage."""


class MemoryBudgetError(RuntimeError):
    def __init__(self, report: dict[int, int], budget: int):
        self.report = report
        super().__init__(
            f"estimated resident bytes {sum(report.values())} exceed budget {budget}; "
            f"per-shard estimate: {report}"
        )


class ColumnKind(Enum):
    STORED = "stored"
    LAMBDA = "lambda"
    SCORE = "score"
    BROADCAST = "broadcast"


class ValueType(Enum):
    TEXT = "text"
    TOKENS = "tokens"
    FLOAT = "float"
    SPARSE = "sparse"
    SCORE = "score"


@dataclass(frozen=True)
class ColumnDef:
    name: str
    kind: ColumnKind
    value_type: ValueType
    deps: tuple[str, ...] = ()
    fn: str = ""
    session_id: str = ""
    dim: int = 0  # sparse columns: fixed feature-space width


@dataclass
class ScoreData:
    """Per-shard score cells: one probability + version pair per row."""

    probs: np.ndarray
    versions: np.ndarray

    @classmethod
    def fresh(cls, rows: int) -> ScoreData:
        return cls(np.full(rows, 0.5, dtype=np.float64), np.zeros(rows, dtype=np.int64))


@dataclass
class Shard:
    shard_id: int
    start_row: int
    row_count: int
    bucket_ids: list[int]
    alive: bool = True
    columns: dict[str, Any] = field(default_factory=dict)
    scores: dict[str, ScoreData] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @property
    def end_row(self) -> int:
        return self.start_row + self.row_count


@dataclass
class ScoreState:
    cursor: int = 0
    active_version: int = 0
    current_pass: "ScorePass | None" = None


# ---------------------------------------------------------------------------
# Predicates (vectorized per shard)


class Predicate:
    def mask(self, engine: "Engine", shard: Shard) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class ScoreRange(Predicate):
    column: str
    lo: float
    hi: float
    versions: tuple[int, ...] | None = None

    def mask(self, engine, shard):
        data = engine.score_data(self.column, shard)
        with shard.lock:
            m = (data.probs >= self.lo) & (data.probs <= self.hi)
            if self.versions is not None:
                m &= np.isin(data.versions, self.versions)
        return m


@dataclass(frozen=True)
class FloatRange(Predicate):
    column: str
    lo: float
    hi: float

    def mask(self, engine, shard):
        values = np.asarray(engine.values(self.column, shard))
        return (values >= self.lo) & (values <= self.hi)


@dataclass(frozen=True)
class FeaturePresent(Predicate):
    """Sparse column: row has any value (or a specific coordinate)."""

    column: str
    feature_id: int | None = None

    def mask(self, engine, shard):
        vectors = engine.values(self.column, shard)
        if self.feature_id is None:
            return np.fromiter((len(v) > 0 for v in vectors), dtype=bool, count=len(vectors))
        fid = self.feature_id
        return np.fromiter((fid in v for v in vectors), dtype=bool, count=len(vectors))


def _rows_mask(rows: np.ndarray, shard: Shard) -> np.ndarray:
    m = np.zeros(shard.row_count, dtype=bool)
    inside = rows[(rows >= shard.start_row) & (rows < shard.end_row)]
    m[inside - shard.start_row] = True
    return m


@dataclass(frozen=True)
class RowsIn(Predicate):
    rows: tuple[int, ...]

    def mask(self, engine, shard):
        return _rows_mask(np.asarray(self.rows, dtype=np.int64), shard)


@dataclass(frozen=True)
class RowsNotIn(Predicate):
    rows: tuple[int, ...]

    def mask(self, engine, shard):
        return ~_rows_mask(np.asarray(self.rows, dtype=np.int64), shard)


@dataclass(frozen=True)
class And(Predicate):
    parts: tuple[Predicate, ...]

    def mask(self, engine, shard):
        m = np.ones(shard.row_count, dtype=bool)
        for part in self.parts:
            m &= part.mask(engine, shard)
        return m


# ---------------------------------------------------------------------------
# Associative combiners


class Combiner:
    """Fold pieces: shard partials merged in shard order, then finalized."""

    associative = True

    def partial(self, engine: "Engine", shard: Shard, mask: np.ndarray):
        raise NotImplementedError

    def merge(self, a, b):
        raise NotImplementedError

    def finalize(self, state):
        return state

    def empty(self):
        raise NotImplementedError


_COMBINER_REGISTRY: dict[str, type[Combiner]] = {}


def register_combiner(name: str, cls: type[Combiner]) -> None:
    """Combiners must declare associativity; anything else is rejected here."""
    if not getattr(cls, "associative", False):
        raise AggregationError(f"combiner {name!r} is not associative")
    _COMBINER_REGISTRY[name] = cls


class Count(Combiner):
    def partial(self, engine, shard, mask):
        return int(mask.sum())

    def merge(self, a, b):
        return a + b

    def empty(self):
        return 0


class Sum(Combiner):
    def __init__(self, column: str):
        self.column = column

    def partial(self, engine, shard, mask):
        values = np.asarray(engine.values(self.column, shard), dtype=np.float64)
        return float(values[mask].sum())

    def merge(self, a, b):
        return a + b

    def empty(self):
        return 0.0


class Min(Combiner):
    def __init__(self, column: str):
        self.column = column

    def partial(self, engine, shard, mask):
        values = np.asarray(engine.values(self.column, shard), dtype=np.float64)
        picked = values[mask]
        return float(picked.min()) if len(picked) else None

    def merge(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return min(a, b)

    def empty(self):
        return None


class Max(Min):
    def partial(self, engine, shard, mask):
        values = np.asarray(engine.values(self.column, shard), dtype=np.float64)
        picked = values[mask]
        return float(picked.max()) if len(picked) else None

    def merge(self, a, b):
        if a is None:
            return b
        if b is None:
            return a
        return max(a, b)


class ScoreHistogram(Combiner):
    """Fixed-bin histogram over a score column's probabilities."""

    def __init__(self, column: str, bins: int = 10, lo: float = 0.0, hi: float = 1.0):
        self.column = column
        self.bins = bins
        self.lo = lo
        self.hi = hi

    def partial(self, engine, shard, mask):
        data = engine.score_data(self.column, shard)
        with shard.lock:
            picked = data.probs[mask]
        counts, _ = np.histogram(picked, bins=self.bins, range=(self.lo, self.hi))
        return counts

    def merge(self, a, b):
        return a + b

    def empty(self):
        return np.zeros(self.bins, dtype=np.int64)


class Histogram(ScoreHistogram):
    """Same shape over a plain float column."""

    def partial(self, engine, shard, mask):
        values = np.asarray(engine.values(self.column, shard), dtype=np.float64)
        counts, _ = np.histogram(values[mask], bins=self.bins, range=(self.lo, self.hi))
        return counts


class Reservoir(Combiner):
    """Uniform sample of matching row ids, merged by match-count weighting.

    Pairwise merges draw the split from the hypergeometric law, so the merged
    sample stays exactly uniform regardless of merge order (associative in
    distribution). Partials are (sorted ids sample, match count).
    """

    def __init__(self, k: int, seed: int):
        if k < 1:
            raise AggregationError("reservoir size must be >= 1")
        self.k = k
        self.rng = np.random.default_rng(seed)

    def partial(self, engine, shard, mask):
        matches = np.nonzero(mask)[0].astype(np.int64) + shard.start_row
        m = len(matches)
        if m <= self.k:
            return matches, m
        return np.sort(self.rng.choice(matches, size=self.k, replace=False)), m

    def merge(self, a, b):
        (rows_a, m_a), (rows_b, m_b) = a, b
        total = m_a + m_b
        if total <= self.k:
            return np.sort(np.concatenate([rows_a, rows_b])), total
        take_a = self.rng.hypergeometric(m_a, m_b, self.k)
        take_a = min(take_a, len(rows_a))
        take_b = min(self.k - take_a, len(rows_b))
        picked_a = rows_a if take_a == len(rows_a) else self.rng.choice(rows_a, take_a, replace=False)
        picked_b = rows_b if take_b == len(rows_b) else self.rng.choice(rows_b, take_b, replace=False)
        return np.sort(np.concatenate([picked_a, picked_b])), total

    def empty(self):
        return np.empty(0, dtype=np.int64), 0

    def finalize(self, state):
        rows, _ = state
        return [int(r) for r in rows]


for _name, _cls in [
    ("count", Count),
    ("sum", Sum),
    ("min", Min),
    ("max", Max),
    ("histogram", Histogram),
    ("score_histogram", ScoreHistogram),
    ("reservoir", Reservoir),
]:
    register_combiner(_name, _cls)


@dataclass(frozen=True)
class AggregationSpec:
    combiner: Combiner
    predicate: Predicate | None = None


@dataclass
class AggregateResult:
    value: Any
    coverage: float
    live_rows: int
    total_rows: int


# ---------------------------------------------------------------------------
# The engine


class Engine:
    def __init__(self, store: RawStore, shard_count: int, memory_budget: int | None = None):
        if shard_count < 1:
            raise ValueError("shard_count must be >= 1")
        self.store = store
        manifest = store.manifest
        self.row_count = manifest.row_count
        self.columns: dict[str, ColumnDef] = {}
        self.broadcasts: dict[str, Any] = {}
        self.score_states: dict[str, ScoreState] = {}
        self._fns: dict[str, Callable] = {}
        self._matrix_cache: dict[tuple[str, int], Any] = {}
        self.shards = self._plan_shards(manifest, shard_count)
        if memory_budget is not None:
            report = self._sizing_report()
            if sum(report.values()) > memory_budget:
                raise MemoryBudgetError(report, memory_budget)
        self._pool = ThreadPoolExecutor(max_workers=max(2, len(self.shards)))
        for name in manifest.columns:
            self.columns[name] = ColumnDef(name, ColumnKind.STORED, ValueType.TEXT)
        self._load_stored()

    # -- layout ----------------------------------------------------------

    @staticmethod
    def _plan_shards(manifest, shard_count: int) -> list[Shard]:
        buckets = manifest.buckets
        n = len(buckets)
        shard_count = min(shard_count, n) if n else 1
        base, rem = divmod(n, shard_count)
        shards = []
        pos = 0
        for i in range(shard_count):
            take = base + (1 if i < rem else 0)
            chunk = buckets[pos : pos + take]
            start = chunk[0].start_row_id if chunk else 0
            rows = sum(b.row_count for b in chunk)
            shards.append(Shard(i, start, rows, [b.bucket_id for b in chunk]))
            pos += take
        return shards

    def _sizing_report(self) -> dict[int, int]:
        sizes = {b.bucket_id: (self.store.dataset_dir / b.path).stat().st_size
                 for b in self.store.manifest.buckets}
        # Resident text roughly doubles the on-disk payload.
        return {s.shard_id: 2 * sum(sizes[b] for b in s.bucket_ids) for s in self.shards}

    def _load_stored(self) -> None:
        names = list(self.store.manifest.columns)
        by_bucket = {b.bucket_id: b for b in self.store.manifest.buckets}
        for shard in self.shards:
            cols: dict[str, list[str]] = {name: [] for name in names}
            for bucket_id in shard.bucket_ids:
                info = by_bucket[bucket_id]
                for row in range(info.start_row_id, info.end_row_id):
                    record = self.store.fetch_record(row)
                    for name in names:
                        cols[name].append(record[name])
            shard.columns.update(cols)
        self.store.drop_cache()

    def shard_for_row(self, row_id: int) -> Shard:
        if row_id < 0 or row_id >= self.row_count:
            raise RowOutOfRange(f"row {row_id} not in [0, {self.row_count})")
        lo, hi = 0, len(self.shards) - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if self.shards[mid].end_row <= row_id:
                lo = mid + 1
            else:
                hi = mid
        return self.shards[lo]

    def kill_shard(self, shard_id: int) -> None:
        self.shards[shard_id].alive = False

    def revive_shard(self, shard_id: int) -> None:
        self.shards[shard_id].alive = True

    def live_shards(self) -> list[Shard]:
        return [s for s in self.shards if s.alive]

    # -- lambda columns ----------------------------------------------------

    def register_fn(self, name: str, fn: Callable) -> None:
        self._fns[name] = fn

    def define_lambda(self, definition: ColumnDef) -> ColumnDef:
        if definition.kind is not ColumnKind.LAMBDA:
            raise ValueError("define_lambda takes a lambda column definition")
        if definition.name in self.columns:
            existing = self.columns[definition.name]
            if existing == definition:
                return existing  # idempotent redefinition
            raise ColumnError(f"column {definition.name!r} already defined differently")
        if definition.fn not in self._fns:
            raise ColumnError(f"unknown lambda function {definition.fn!r}")
        if not definition.deps:
            raise ColumnError("lambda columns are maps on other columns; no dependencies given")
        for dep in definition.deps:
            if dep not in self.columns and dep not in self.broadcasts:
                raise ColumnError(f"unknown dependency {dep!r}")
        if definition.name in self._dep_closure(definition.deps):
            raise CycleError(f"column {definition.name!r} would depend on itself")
        self.columns[definition.name] = definition
        return definition

    def _dep_closure(self, deps: Iterable[str]) -> set[str]:
        seen: set[str] = set()
        stack = list(deps)
        while stack:
            name = stack.pop()
            if name in seen:
                continue
            seen.add(name)
            col = self.columns.get(name)
            if col is not None:
                stack.extend(col.deps)
        return seen

    def add_broadcast(self, name: str, value: Any) -> None:
        """Aggregation result wrapped as a column: one scalar, visible per row."""
        if name in self.columns:
            raise ColumnError(f"column {name!r} already defined")
        self.broadcasts[name] = value

    def values(self, column: str, shard: Shard):
        """Materialized values of a column on one shard (computed lazily)."""
        if column in self.broadcasts:
            return [self.broadcasts[column]] * shard.row_count
        definition = self._require_column(column)
        if definition.kind is ColumnKind.SCORE:
            raise ColumnError("score columns are read via score_data()")
        cached = shard.columns.get(column)
        if cached is not None:
            return cached
        values = self._materialize(definition, shard)
        shard.columns[column] = values
        return values

    def _materialize(self, definition: ColumnDef, shard: Shard):
        fn = self._fns[definition.fn]
        dep_values = [self.values(dep, shard) for dep in definition.deps]
        computed = [fn(*args) for args in zip(*dep_values)] if dep_values else []
        if definition.value_type is ValueType.FLOAT:
            return np.asarray(computed, dtype=np.float64)
        return computed

    def drop_cached(self, column: str) -> None:
        definition = self._require_column(column)
        if definition.kind is ColumnKind.STORED:
            raise ColumnError("stored columns are resident; nothing to drop")
        for shard in self.shards:
            shard.columns.pop(column, None)
            self._matrix_cache.pop((column, shard.shard_id), None)

    def _require_column(self, column: str) -> ColumnDef:
        definition = self.columns.get(column)
        if definition is None:
            raise ColumnError(f"unknown column {column!r}")
        return definition

    # -- single-row access -------------------------------------------------

    def get_row(self, row_id: int, columns: list[str]) -> dict[str, Any]:
        """Values for the requested columns; survives dead shards.

        The returned map carries a `recomputed` flag: True when the owning
        shard is down and values were rebuilt from raw data + lambda replay.
        """
        shard = self.shard_for_row(row_id)
        for name in columns:
            if name not in self.columns and name not in self.broadcasts:
                raise ColumnError(f"unknown column {name!r}")
        if shard.alive:
            out: dict[str, Any] = {}
            local = row_id - shard.start_row
            for name in columns:
                definition = self.columns.get(name)
                if definition is not None and definition.kind is ColumnKind.SCORE:
                    data = self.score_data(name, shard)
                    with shard.lock:
                        out[name] = (float(data.probs[local]), int(data.versions[local]))
                else:
                    out[name] = self.values(name, shard)[local]
            out["recomputed"] = False
            return out
        return self._recompute_row(row_id, columns)

    def _recompute_row(self, row_id: int, columns: list[str]) -> dict[str, Any]:
        try:
            record = self.store.fetch_record(row_id)
        except OSError as exc:
            raise UnavailableError(f"raw store unreachable for row {row_id}: {exc}") from exc
        cache: dict[str, Any] = {}

        def value_of(name: str) -> Any:
            if name in cache:
                return cache[name]
            if name in self.broadcasts:
                return self.broadcasts[name]
            definition = self._require_column(name)
            if definition.kind is ColumnKind.STORED:
                result = record[name]
            elif definition.kind is ColumnKind.LAMBDA:
                args = [value_of(dep) for dep in definition.deps]
                result = self._fns[definition.fn](*args)
            else:
                # Model state lives outside the column graph; scores are only
                # reconstructible by rescoring. Defined fallback:
                result = (0.5, 0)
            cache[name] = result
            return result

        out = {name: value_of(name) for name in columns}
        out["recomputed"] = True
        return out

    # -- aggregation ---------------------------------------------------

    def aggregate(self, spec: AggregationSpec) -> AggregateResult:
        if not spec.combiner.associative:
            raise AggregationError("non-associative combiner rejected")
        live = self.live_shards()

        def run_shard(shard: Shard):
            if spec.predicate is None:
                mask = np.ones(shard.row_count, dtype=bool)
            else:
                mask = spec.predicate.mask(self, shard)
            return spec.combiner.partial(self, shard, mask)

        partials = list(self._pool.map(run_shard, live))
        state = spec.combiner.empty()
        for part in partials:  # merge sequentially, in shard order
            state = spec.combiner.merge(state, part)
        live_rows = sum(s.row_count for s in live)
        coverage = live_rows / self.row_count if self.row_count else 1.0
        return AggregateResult(spec.combiner.finalize(state), coverage, live_rows, self.row_count)

    def reservoir_sample(
        self, predicate: Predicate | None, k: int, seed: int
    ) -> list[int]:
        """Uniform sample (without replacement) of matching rows on live shards.

        Per-shard reservoirs of size <= k are merged by drawing the per-shard
        composition from the multivariate hypergeometric law weighted by match
        counts, which keeps every matching row exactly equally likely.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        rng = np.random.default_rng(seed)
        reservoirs: list[np.ndarray] = []
        counts: list[int] = []
        for shard in self.live_shards():
            if predicate is None:
                matches = np.arange(shard.start_row, shard.end_row, dtype=np.int64)
            else:
                mask = predicate.mask(self, shard)
                matches = np.nonzero(mask)[0].astype(np.int64) + shard.start_row
            m = len(matches)
            if m == 0:
                continue
            take = min(k, m)
            picked = matches if m <= k else rng.choice(matches, size=take, replace=False)
            reservoirs.append(np.sort(picked))
            counts.append(m)
        total = sum(counts)
        if total == 0:
            return []
        if total <= k:
            return sorted(int(r) for res in reservoirs for r in res)
        composition = rng.multivariate_hypergeometric(counts, k)
        out: list[int] = []
        for reservoir, take in zip(reservoirs, composition):
            if take == 0:
                continue
            if take == len(reservoir):
                chosen = reservoir
            else:
                chosen = rng.choice(reservoir, size=take, replace=False)
            out.extend(int(r) for r in chosen)
        return sorted(out)

    # -- score columns ---------------------------------------------------

    def add_score_column(self, name: str, session_id: str = "") -> ColumnDef:
        if name in self.columns:
            raise ColumnError(f"column {name!r} already defined")
        definition = ColumnDef(name, ColumnKind.SCORE, ValueType.SCORE, session_id=session_id)
        self.columns[name] = definition
        self.score_states[name] = ScoreState()
        for shard in self.shards:
            shard.scores[name] = ScoreData.fresh(shard.row_count)
        return definition

    def score_data(self, column: str, shard: Shard) -> ScoreData:
        definition = self._require_column(column)
        if definition.kind is not ColumnKind.SCORE:
            raise ColumnError(f"{column!r} is not a score column")
        return shard.scores[column]

    def start_score_pass(self, column: str, scorer, feature_column: str) -> "ScorePass":
        """Interrupt any active pass and begin scoring with a newer model.

        The cursor is NOT reset: the new pass picks up where the previous
        scorer stopped and wraps around the whole dataset once.
        """
        state = self.score_states[column]
        if scorer.version <= state.active_version:
            raise StaleModelVersion(
                f"model version {scorer.version} not newer than {state.active_version}"
            )
        if state.current_pass is not None:
            state.current_pass.interrupt()
        state.active_version = scorer.version
        new_pass = ScorePass(self, column, scorer, feature_column)
        state.current_pass = new_pass
        return new_pass

    def score_freshness(self, column: str) -> dict[int, int]:
        """Exact row count per model version; always sums to N."""
        self._require_column(column)
        out: dict[int, int] = {}
        for shard in self.shards:
            data = shard.scores[column]
            with shard.lock:
                versions, counts = np.unique(data.versions, return_counts=True)
            for v, c in zip(versions, counts):
                out[int(v)] = out.get(int(v), 0) + int(c)
        return out

    def feature_matrix(self, column: str, shard: Shard):
        """CSR view of a sparse column on one shard (cached per shard)."""
        key = (column, shard.shard_id)
        cached = self._matrix_cache.get(key)
        if cached is not None:
            return cached
        definition = self._require_column(column)
        if definition.value_type is not ValueType.SPARSE:
            raise ColumnError(f"{column!r} is not a sparse column")
        vectors = self.values(column, shard)
        indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
        nnz = sum(len(v) for v in vectors)
        indices = np.empty(nnz, dtype=np.int64)
        data = np.empty(nnz, dtype=np.float64)
        pos = 0
        for i, vec in enumerate(vectors):
            for fid in sorted(vec):
                indices[pos] = fid
                data[pos] = vec[fid]
                pos += 1
            indptr[i + 1] = pos
        matrix = sp.csr_matrix((data, indices, indptr), shape=(len(vectors), definition.dim))
        self._matrix_cache[key] = matrix
        return matrix

    # -- diagnostics -------------------------------------------------------

    def stats(self) -> dict:
        shard_stats = []
        for shard in self.shards:
            resident = 0
            for values in shard.columns.values():
                if isinstance(values, np.ndarray):
                    resident += values.nbytes
                else:
                    resident += sum(len(str(v)) for v in values[:100]) * max(
                        1, len(values) // 100
                    )
            for data in shard.scores.values():
                resident += data.probs.nbytes + data.versions.nbytes
            shard_stats.append(
                {
                    "shard_id": shard.shard_id,
                    "rows": shard.row_count,
                    "buckets": len(shard.bucket_ids),
                    "alive": shard.alive,
                    "columns": sorted(shard.columns),
                    "resident_bytes_estimate": resident,
                }
            )
        return {
            "rows": self.row_count,
            "shards": shard_stats,
            "score_freshness": {name: self.score_freshness(name) for name in self.score_states},
        }


class ScorePass:
    """One wrapping sweep of a score column, interruptible at chunk bounds.

    A pass visits every row once starting at the column's stored cursor,
    overwriting probability and version in place so readers see fresh scores
    as soon as each chunk lands. The interrupt flag is checked between chunks
    (1,024 rows), bounding interrupt latency without per-row checks.
    """

    def __init__(self, engine: Engine, column: str, scorer, feature_column: str,
                 chunk_rows: int = SCORE_CHUNK_ROWS):
        self.engine = engine
        self.column = column
        self.scorer = scorer
        self.feature_column = feature_column
        self.chunk_rows = chunk_rows
        self.rows_scored = 0
        self._interrupted = threading.Event()
        self._state = engine.score_states[column]
        self.on_chunk: Callable | None = None  # test hook: called after each chunk

    @property
    def interrupted(self) -> bool:
        return self._interrupted.is_set()

    @property
    def done(self) -> bool:
        return self.rows_scored >= self.engine.row_count

    def interrupt(self) -> None:
        self._interrupted.set()

    def step(self, max_rows: int | None = None) -> int:
        """Score up to max_rows (default: run to completion or interruption)."""
        engine = self.engine
        n = engine.row_count
        scored_now = 0
        while not self.done and not self.interrupted:
            if max_rows is not None and scored_now >= max_rows:
                break
            start = self._state.cursor
            shard = engine.shard_for_row(start)
            end = min(start + self.chunk_rows, shard.end_row, start + (n - self.rows_scored))
            if max_rows is not None:
                end = min(end, start + (max_rows - scored_now))
            if not shard.alive:
                # A dead shard's cells cannot be written; skip its remainder.
                end = min(shard.end_row, start + (n - self.rows_scored))
                self._advance(start, end)
                scored_now += end - start
                continue
            local = slice(start - shard.start_row, end - shard.start_row)
            matrix = engine.feature_matrix(self.feature_column, shard)
            probs = self.scorer.predict_batch(matrix[local])
            data = engine.score_data(self.column, shard)
            with shard.lock:
                data.probs[local] = probs
                data.versions[local] = self.scorer.version
            self._advance(start, end)
            scored_now += end - start
            if self.on_chunk is not None:
                self.on_chunk(self)
        return scored_now

    def _advance(self, start: int, end: int) -> None:
        self.rows_scored += end - start
        self._state.cursor = end % self.engine.row_count

    def run(self) -> dict:
        """Run to completion or interruption; returns a small pass report."""
        self.step()
        return {
            "column": self.column,
            "model_version": self.scorer.version,
            "rows_scored": self.rows_scored,
            "interrupted": self.interrupted,
            "cursor": self._state.cursor,
        }
