"""Label efficiency, measured: an oracle teacher driven by boundary sampling
versus uniform sampling on the same lopsided corpus.

Run from the repository root: python demos/05_simulated_teacher.py
(takes ~20 seconds; scale n_docs up for the real effect size)
"""

import tempfile

from labelloop.harness import CorpusSpec, HarnessConfig, HarnessEnv

config = HarnessConfig(
    corpus=CorpusSpec(n_docs=20_000),
    seed=3,
    label_budget=600,
    batch_size=20,
    stop_at_target=True,
)
env = HarnessEnv(config, tempfile.mkdtemp(prefix="labelloop-demo-"))
print(f"corpus: {config.corpus.n_docs:,} docs, {env.oracle.sum()} positives "
      f"({env.oracle.mean():.1%})")
print(f"target: recall >= {config.target_recall} at precision >= {config.target_precision} "
      "on the held-out 30%\n")

for strategy in ("active", "uniform"):
    report = env.run(strategy)
    reached = report.labels_to_target
    print(f"{strategy:>8}: {'reached target at ' + str(reached) + ' labels' if reached else 'did not reach target in ' + str(report.labels_used) + ' labels'}")
    for r in report.rounds[:: max(1, len(report.rounds) // 6)]:
        print(f"          {r.labels_used:4d} labels -> recall@p80 "
              f"{r.recall_at_target_precision:.3f} (AUC {r.test_auc:.3f})")
    print()
