"""Lambda columns, associative aggregation, reservoir sampling, and what
happens when a shard dies.

Run from the repository root: python demos/02_columns_and_aggregation.py
"""

import tempfile

from labelloop import Engine, RawStore, import_items
from labelloop.engine import (
    AggregationSpec,
    ColumnDef,
    ColumnKind,
    Count,
    FloatRange,
    Histogram,
    Sum,
    ValueType,
)

workdir = tempfile.mkdtemp(prefix="labelloop-demo-")
records = [
    {
        "external_id": f"doc-{i}",
        "url": "",
        "title": f"doc {i}",
        "body_text": "lorem ipsum " * (1 + i % 7),
    }
    for i in range(2000)
]
import_items(records, workdir, "docs", bucket_capacity=125)
engine = Engine(RawStore.open(workdir, "docs"), shard_count=4)
print("shards:", [(s.shard_id, s.row_count) for s in engine.shards])

# A lambda column is a pure function of other columns, recomputable on demand.
engine.register_fn("char_length", lambda text: float(len(text)))
engine.define_lambda(
    ColumnDef("length", ColumnKind.LAMBDA, ValueType.FLOAT, deps=("body_text",), fn="char_length")
)

total = engine.aggregate(AggregationSpec(Sum("length")))
print(f"\ntotal characters: {total.value:,.0f} (coverage {total.coverage:.0%})")

hist = engine.aggregate(AggregationSpec(Histogram("length", bins=8, lo=0, hi=100)))
print("length histogram:", hist.value.tolist())

medium = FloatRange("length", 30, 60)
print("medium-length docs:", engine.aggregate(AggregationSpec(Count(), medium)).value)

sample = engine.reservoir_sample(medium, k=5, seed=7)
print("uniform sample of them:", sample)

# Kill a shard: aggregations degrade gracefully, single-row reads do not.
engine.kill_shard(1)
degraded = engine.aggregate(AggregationSpec(Count(), medium))
print(f"\nafter killing shard 1: count {degraded.value} at coverage {degraded.coverage:.0%}")

row = engine.shards[1].start_row + 3
values = engine.get_row(row, ["title", "length"])
print(f"row {row} from the dead shard: {values['title']!r}, length {values['length']}, "
      f"recomputed from raw storage: {values['recomputed']}")
