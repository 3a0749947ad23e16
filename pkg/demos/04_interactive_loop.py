"""The full teaching loop in one script: seed by search, label, let the
system retrain and rescore, sample near the boundary, review errors,
export the model.

Run from the repository root: python demos/04_interactive_loop.py
"""

import tempfile

from labelloop import Engine, LoopService, RawStore, SampleRequest, import_items
from labelloop.harness import CorpusSpec, build_corpus

workdir = tempfile.mkdtemp(prefix="labelloop-demo-")

# A lopsided synthetic corpus: ~2% positives marked by planted tokens.
records, oracle = build_corpus(CorpusSpec(n_docs=4000, noise_vocab=600), seed=11)
import_items(records, workdir, "corpus", bucket_capacity=500)
engine = Engine(RawStore.open(workdir, "corpus"), shard_count=4)
service = LoopService(engine, workdir + "/sessions", scoring="sync")

sid = service.create_session(
    features=[
        {"type": "dictionary", "name": "markers",
         "entries": [f"marker{i:02d}" for i in range(40)]},
        {"type": "bow_tfidf", "name": "bow", "cap": 700, "max_n": 1},
    ],
    retrain_threshold=10,
    split_ratio=0.7,
)
print("session:", sid)

def teach(items, note):
    labels = [(i.row_id, "positive" if oracle[i.row_id] else "negative") for i in items]
    ack = service.submit_labels(sid, labels, source=note)
    print(f"  labeled {len(labels)} ({note}); model version now {ack['model_version']}")

# Cold start: the teacher reveals a-priori knowledge through search.
hits = service.draw_sample(sid, SampleRequest(strategy="search", query="marker00 marker01 marker02", count=10))
teach(hits, "search")
hits = service.draw_sample(sid, SampleRequest(strategy="uniform_unlabeled", count=10, seed=1))
teach(hits, "uniform")

# Warm loop: sample near the decision boundary, correct the pre-labels.
for round_no in range(3):
    items = service.draw_sample(
        sid, SampleRequest(strategy="score_range", lo=0.3, hi=0.7, count=10, seed=round_no)
    )
    if not items:
        items = service.draw_sample(
            sid, SampleRequest(strategy="uniform_unlabeled", count=10, seed=100 + round_no)
        )
    wrong = sum(1 for i in items if (i.pre_label == "positive") != bool(oracle[i.row_id]))
    print(f"round {round_no}: {len(items)} items sampled, {wrong} pre-labels needed correction")
    teach(items, "active_sample")

status = service.status(sid)
print("\nstatus:", {k: status[k] for k in ("model_version", "positives", "negatives", "scorer_status")})
print("score freshness:", status["freshness"])

errors = service.review(sid, which="disagreement", sort_key="score")
print(f"\nreview: {len(errors)} labeled rows disagree with the current model")
for item in errors[:3]:
    print(f"  row {item['row_id']}: labeled {item['label']}, predicted "
          f"{item['predicted']} (p={item['probability']:.2f})")

history = service.metrics_history(sid)
print("\nmetrics over time (test AUC):",
      [round(h["test"]["auc"], 3) if h["test"]["auc"] is not None else None for h in history])

export_text = service.export_model(sid, status["model_version"])
print(f"\nexport document: {len(export_text):,} bytes of standalone-scoreable JSON")
