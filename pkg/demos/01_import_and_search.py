"""Import a corpus into immutable buckets, then find rare items by search.

Run from the repository root: python demos/01_import_and_search.py
"""

import tempfile

from labelloop import Engine, LoopService, RawStore, import_items

workdir = tempfile.mkdtemp(prefix="labelloop-demo-")

# A tiny corpus: cooking pages are the rare class we care about.
records = []
for i in range(500):
    cooking = i % 40 == 0
    body = "whisk the eggs with flour and butter then bake" if cooking else (
        f"generic page number {i} about weather traffic and sports scores"
    )
    records.append(
        {
            "external_id": f"page-{i}",
            "url": f"http://corpus.test/{i}",
            "title": f"page {i}" + (" - recipes" if cooking else ""),
            "body_text": body,
        }
    )

manifest, report = import_items(records, workdir, "pages", bucket_capacity=100)
print(f"imported {report.imported} rows into {len(manifest.buckets)} buckets")
for bucket in manifest.buckets:
    print(f"  bucket {bucket.bucket_id}: rows [{bucket.start_row_id}, {bucket.end_row_id}) "
          f"digest {bucket.digest[:12]}…")

# Rows are addressable forever by their dense id.
store = RawStore.open(workdir, "pages")
print("\nrow 40 raw bytes:", store.fetch_raw(40)[:60], "…")

# Load into the in-memory column engine and search.
engine = Engine(store, shard_count=4)
service = LoopService(engine, workdir + "/sessions")
print("\ntop hits for 'eggs flour bake':")
for hit in service.search("eggs flour bake", k=5):
    print(f"  row {hit['row_id']:4d}  score {hit['score']:.3f}  {hit['title']}")
