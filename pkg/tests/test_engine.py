import numpy as np
import pytest
import scipy.stats

from labelloop.engine import (
    AggregationError,
    AggregationSpec,
    And,
    ColumnDef,
    ColumnError,
    ColumnKind,
    Combiner,
    Count,
    CycleError,
    Engine,
    FloatRange,
    Max,
    Min,
    RowsNotIn,
    StaleModelVersion,
    Sum,
    ValueType,
    register_combiner,
)
from labelloop.raw_store import RawStore, RowOutOfRange, import_items

from conftest import make_records


def float_lambda(engine, name="rowval", source="external_id"):
    """Numeric column derived from the stored external id ('ext-<i>')."""
    engine.register_fn("ext_to_float", lambda s: float(s.split("-")[1]))
    return engine.define_lambda(
        ColumnDef(name, ColumnKind.LAMBDA, ValueType.FLOAT, deps=(source,), fn="ext_to_float")
    )


class StubScorer:
    """Scores rows by their single feature value, squashed into [0, 1]."""

    def __init__(self, version, scale=0.01):
        self.version = version
        self.scale = scale

    def predict_batch(self, matrix):
        values = np.asarray(matrix @ np.ones(matrix.shape[1])).ravel()
        return np.clip(values * self.scale, 0.0, 1.0)


def sparse_feature_column(engine, name="feats"):
    engine.register_fn("ext_to_vec", lambda s: {0: float(s.split("-")[1])})
    return engine.define_lambda(
        ColumnDef(name, ColumnKind.LAMBDA, ValueType.SPARSE, deps=("external_id",),
                  fn="ext_to_vec", dim=1)
    )


class TestLayout:
    def test_one_bucket_per_shard(self, tmp_path):
        import_items(make_records(30), tmp_path, "d", bucket_capacity=10)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=3)
        assert [len(s.bucket_ids) for s in engine.shards] == [1, 1, 1]

    def test_balanced_within_one_bucket(self, tmp_path):
        import_items(make_records(100), tmp_path, "d", bucket_capacity=10)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=3)
        assert [len(s.bucket_ids) for s in engine.shards] == [4, 3, 3]

    def test_shard_lookup_matches_linear_scan(self, tmp_path):
        import_items(make_records(500), tmp_path, "d", bucket_capacity=13)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=5)
        rng = np.random.default_rng(0)
        for row in rng.integers(0, 500, size=1000):
            expected = next(
                s for s in engine.shards if s.start_row <= row < s.end_row
            )
            assert engine.shard_for_row(int(row)) is expected

    def test_stored_columns_resident(self, small_engine):
        engine, records = small_engine
        for shard in engine.shards:
            texts = shard.columns["body_text"]
            for local, row in enumerate(range(shard.start_row, shard.end_row)):
                assert texts[local] == records[row]["body_text"]

    def test_memory_budget_fails_fast_with_report(self, tmp_path, small_store):
        from labelloop.engine import MemoryBudgetError

        store, _ = small_store
        with pytest.raises(MemoryBudgetError) as err:
            Engine(store, shard_count=3, memory_budget=100)
        assert set(err.value.report) == {0, 1, 2}  # per-shard sizing
        assert sum(err.value.report.values()) > 100


class TestLambda:
    def test_char_length(self, small_engine):
        engine, records = small_engine
        engine.register_fn("length", len)
        engine.define_lambda(
            ColumnDef("len", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("body_text",), fn="length")
        )
        row = engine.get_row(4, ["len"])
        assert row["len"] == len(records[4]["body_text"])

    def test_composition(self, small_engine):
        engine, _ = small_engine
        engine.register_fn("length", len)
        engine.register_fn("is_long", lambda n: 1.0 if n > 40 else 0.0)
        engine.define_lambda(
            ColumnDef("len", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("body_text",), fn="length")
        )
        engine.define_lambda(
            ColumnDef("long", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("len",), fn="is_long")
        )
        for row_id in (0, 7, 13):
            row = engine.get_row(row_id, ["len", "long"])
            assert row["long"] == (1.0 if row["len"] > 40 else 0.0)

    def test_recompute_equivalence(self, small_engine):
        engine, _ = small_engine
        float_lambda(engine)
        before = [
            list(engine.values("rowval", shard)) for shard in engine.shards
        ]
        engine.drop_cached("rowval")
        after = [list(engine.values("rowval", shard)) for shard in engine.shards]
        assert before == after

    def test_unknown_dep_rejected(self, small_engine):
        engine, _ = small_engine
        engine.register_fn("id", lambda x: x)
        with pytest.raises(ColumnError):
            engine.define_lambda(
                ColumnDef("b", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("nope",), fn="id")
            )

    def test_self_reference_rejected(self, small_engine):
        engine, _ = small_engine
        engine.register_fn("id", lambda x: x)
        with pytest.raises((ColumnError, CycleError)):
            engine.define_lambda(
                ColumnDef("loop", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("loop",), fn="id")
            )


class TestGetRow:
    def test_live_shard(self, small_engine):
        engine, records = small_engine
        row = engine.get_row(3, ["title", "body_text"])
        assert row["title"] == records[3]["title"]
        assert row["recomputed"] is False

    def test_dead_shard_recompute_matches_snapshot(self, small_engine):
        engine, _ = small_engine
        float_lambda(engine)
        victim = engine.shards[1]
        snapshot = {
            r: engine.get_row(r, ["title", "body_text", "rowval"])
            for r in range(victim.start_row, victim.end_row)
        }
        engine.kill_shard(1)
        for r, before in snapshot.items():
            after = engine.get_row(r, ["title", "body_text", "rowval"])
            assert after["recomputed"] is True
            for key in ("title", "body_text", "rowval"):
                assert after[key] == before[key]

    def test_dead_shard_score_falls_back(self, small_engine):
        engine, _ = small_engine
        engine.add_score_column("score:x")
        sparse_feature_column(engine)
        engine.start_score_pass("score:x", StubScorer(1), "feats").run()
        engine.kill_shard(0)
        row = engine.shards[0].start_row
        assert engine.get_row(row, ["score:x"])["score:x"] == (0.5, 0)

    def test_unknown_column(self, small_engine):
        engine, _ = small_engine
        with pytest.raises(ColumnError):
            engine.get_row(0, ["nope"])

    def test_out_of_range(self, small_engine):
        engine, _ = small_engine
        with pytest.raises(RowOutOfRange):
            engine.get_row(30, ["title"])

    def test_raw_store_unreachable(self, tmp_path):
        from labelloop.engine import UnavailableError

        import_items(make_records(20), tmp_path, "d", bucket_capacity=5)
        store = RawStore.open(tmp_path, "d")
        engine = Engine(store, shard_count=2)
        engine.kill_shard(0)
        store.drop_cache()
        for info in store.manifest.buckets:
            (store.dataset_dir / info.path).unlink()
        with pytest.raises(UnavailableError):
            engine.get_row(0, ["title"])


class TestAggregate:
    def test_count_all(self, small_engine):
        engine, _ = small_engine
        result = engine.aggregate(AggregationSpec(Count()))
        assert result.value == 30
        assert result.coverage == 1.0

    def test_sum_of_row_indices(self, tmp_path):
        import_items(make_records(10), tmp_path, "d", bucket_capacity=3)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=2)
        float_lambda(engine)
        result = engine.aggregate(AggregationSpec(Sum("rowval")))
        assert result.value == 45.0

    def test_histogram_equals_sequential_fold(self, tmp_path):
        import_items(make_records(1000), tmp_path, "d", bucket_capacity=77)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=4)
        engine.add_score_column("score:x")
        sparse_feature_column(engine)
        engine.start_score_pass("score:x", StubScorer(1, scale=0.001), "feats").run()
        from labelloop.engine import ScoreHistogram

        result = engine.aggregate(AggregationSpec(ScoreHistogram("score:x", bins=10)))
        probs = np.concatenate([s.scores["score:x"].probs for s in engine.shards])
        expected, _ = np.histogram(probs, bins=10, range=(0.0, 1.0))
        np.testing.assert_array_equal(result.value, expected)

    def test_fold_equivalence_across_shard_counts(self, tmp_path):
        # integer-valued column: partial sums merge exactly at any shard count
        import_items(make_records(200), tmp_path, "d", bucket_capacity=11)
        results = []
        for shards in range(1, 9):
            engine = Engine(RawStore.open(tmp_path, "d"), shard_count=shards)
            float_lambda(engine)
            spec = AggregationSpec(Sum("rowval"), FloatRange("rowval", 50, 150))
            results.append(engine.aggregate(spec).value)
        assert len(set(results)) == 1
        assert results[0] == sum(v for v in range(200) if 50 <= v <= 150)

    def test_min_max(self, tmp_path):
        import_items(make_records(50), tmp_path, "d", bucket_capacity=7)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=3)
        float_lambda(engine)
        assert engine.aggregate(AggregationSpec(Min("rowval"))).value == 0.0
        assert engine.aggregate(AggregationSpec(Max("rowval"))).value == 49.0

    def test_dead_shard_coverage(self, small_engine):
        engine, _ = small_engine
        engine.kill_shard(0)
        result = engine.aggregate(AggregationSpec(Count()))
        dead_rows = engine.shards[0].row_count
        assert result.value == 30 - dead_rows
        assert result.coverage == pytest.approx((30 - dead_rows) / 30)

    def test_non_associative_rejected(self):
        class Mean(Combiner):
            associative = False

        with pytest.raises(AggregationError):
            register_combiner("mean", Mean)

    def test_conjunction_predicate(self, tmp_path):
        import_items(make_records(60), tmp_path, "d", bucket_capacity=9)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=3)
        float_lambda(engine)
        spec = AggregationSpec(
            Count(),
            And((FloatRange("rowval", 10, 40), RowsNotIn(tuple(range(20, 30))))),
        )
        assert engine.aggregate(spec).value == len(
            [v for v in range(60) if 10 <= v <= 40 and not (20 <= v < 30)]
        )

    def test_broadcast_column_visible_to_lambdas(self, small_engine):
        engine, _ = small_engine
        total = engine.aggregate(AggregationSpec(Count())).value
        engine.add_broadcast("n_rows", float(total))
        engine.register_fn("halve", lambda n: n / 2)
        engine.define_lambda(
            ColumnDef("half_n", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("n_rows",), fn="halve")
        )
        assert engine.get_row(5, ["half_n"])["half_n"] == 15.0


class TestReservoir:
    def test_fewer_matches_than_k(self, tmp_path):
        import_items(make_records(40), tmp_path, "d", bucket_capacity=6)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=3)
        float_lambda(engine)
        rows = engine.reservoir_sample(FloatRange("rowval", 10, 11), k=5, seed=0)
        assert rows == [10, 11]

    def test_no_matches(self, small_engine):
        engine, _ = small_engine
        float_lambda(engine)
        assert engine.reservoir_sample(FloatRange("rowval", 900, 950), k=3, seed=0) == []

    def test_uniformity_chi_square(self, tmp_path):
        import_items(make_records(40), tmp_path, "d", bucket_capacity=6)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=4)
        float_lambda(engine)
        predicate = FloatRange("rowval", 10, 19)  # 10 matching rows
        counts = np.zeros(10)
        trials = 4000
        for t in range(trials):
            for row in engine.reservoir_sample(predicate, k=2, seed=t):
                counts[row - 10] += 1
        _, p = scipy.stats.chisquare(counts)
        assert p > 0.001

    def test_sample_without_predicate(self, small_engine):
        engine, _ = small_engine
        rows = engine.reservoir_sample(None, k=10, seed=1)
        assert len(rows) == 10
        assert len(set(rows)) == 10

    def test_reservoir_combiner_in_aggregate(self, tmp_path):
        from labelloop.engine import Reservoir

        import_items(make_records(60), tmp_path, "d", bucket_capacity=6)
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=4)
        float_lambda(engine)
        spec = AggregationSpec(Reservoir(k=5, seed=3), FloatRange("rowval", 10, 49))
        result = engine.aggregate(spec)
        assert len(result.value) == 5
        assert all(10 <= r <= 49 for r in result.value)
        few = engine.aggregate(AggregationSpec(Reservoir(k=5, seed=3), FloatRange("rowval", 20, 22)))
        assert few.value == [20, 21, 22]


class TestScoring:
    def make_engine(self, tmp_path, n=10, shards=2):
        import_items(make_records(n), tmp_path, "d", bucket_capacity=max(1, n // 4))
        engine = Engine(RawStore.open(tmp_path, "d"), shard_count=shards)
        engine.add_score_column("score:x")
        sparse_feature_column(engine)
        return engine

    def all_versions(self, engine):
        return np.concatenate([s.scores["score:x"].versions for s in engine.shards])

    def test_fresh_column_full_pass(self, tmp_path):
        engine = self.make_engine(tmp_path)
        assert engine.score_freshness("score:x") == {0: 10}
        report = engine.start_score_pass("score:x", StubScorer(3), "feats").run()
        assert report["rows_scored"] == 10 and not report["interrupted"]
        assert engine.score_freshness("score:x") == {3: 10}

    def test_interrupt_from_cursor(self, tmp_path):
        engine = self.make_engine(tmp_path)
        engine.start_score_pass("score:x", StubScorer(1), "feats").run()
        engine.score_states["score:x"].cursor = 5  # previous scorer stopped here
        pass2 = engine.start_score_pass("score:x", StubScorer(2), "feats")
        pass2.step(max_rows=3)
        pass2.interrupt()
        versions = self.all_versions(engine)
        assert list(np.nonzero(versions == 2)[0]) == [5, 6, 7]
        assert (versions[[0, 1, 2, 3, 4, 8, 9]] == 1).all()

    def test_two_versions_after_midway_interrupt(self, tmp_path):
        engine = self.make_engine(tmp_path)
        engine.start_score_pass("score:x", StubScorer(1), "feats").run()
        pass2 = engine.start_score_pass("score:x", StubScorer(2), "feats")
        pass2.step(max_rows=5)
        pass2.interrupt()
        freshness = engine.score_freshness("score:x")
        assert set(freshness) == {1, 2}
        assert sum(freshness.values()) == 10

    def test_resume_continues_from_cursor_and_wraps(self, tmp_path):
        engine = self.make_engine(tmp_path)
        pass1 = engine.start_score_pass("score:x", StubScorer(1), "feats")
        pass1.step(max_rows=6)
        pass1.interrupt()
        assert engine.score_states["score:x"].cursor == 6
        pass2 = engine.start_score_pass("score:x", StubScorer(2), "feats")
        pass2.step(max_rows=4)  # rows 6..9
        versions = self.all_versions(engine)
        assert (versions[6:] == 2).all() and (versions[:6] == 1).all()
        pass2.step()  # wraps to finish 0..5
        assert engine.score_freshness("score:x") == {2: 10}

    def test_stale_model_rejected(self, tmp_path):
        engine = self.make_engine(tmp_path)
        engine.start_score_pass("score:x", StubScorer(2), "feats").run()
        with pytest.raises(StaleModelVersion):
            engine.start_score_pass("score:x", StubScorer(2), "feats")

    def test_starting_new_pass_interrupts_previous(self, tmp_path):
        engine = self.make_engine(tmp_path)
        pass1 = engine.start_score_pass("score:x", StubScorer(1), "feats")
        pass1.step(max_rows=2)
        pass2 = engine.start_score_pass("score:x", StubScorer(2), "feats")
        assert pass1.interrupted
        assert pass1.step() == 0  # refuses to continue
        pass2.run()
        assert engine.score_freshness("score:x") == {2: 10}

    def test_versions_never_decrease(self, tmp_path):
        engine = self.make_engine(tmp_path, n=40, shards=3)
        previous = self.all_versions(engine).copy()
        for version in (1, 2, 3):
            p = engine.start_score_pass("score:x", StubScorer(version), "feats")
            p.step(max_rows=13 * version)
            p.interrupt()
            current = self.all_versions(engine)
            assert (current >= previous).all()
            previous = current.copy()
            assert sum(engine.score_freshness("score:x").values()) == 40


class TestStats:
    def test_stats_shape(self, small_engine):
        engine, _ = small_engine
        engine.add_score_column("score:x")
        stats = engine.stats()
        assert stats["rows"] == 30
        assert len(stats["shards"]) == 3
        assert "score:x" in stats["score_freshness"]
