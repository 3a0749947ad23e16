"""Per-shard inverted index with Okapi BM25 ranking.

Each shard indexes its own rows and keeps its own statistics (row count,
document frequencies, average length); no global statistics are exchanged.
Cross-shard search merges raw shard-local scores, which makes scores from
different shards not strictly comparable — a known, accepted bias.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable

from .tokens import tokenize

BM25_K1 = 1.2
BM25_B = 0.75


@dataclass
class IndexShard:
    shard_id: int
    postings: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    doc_lengths: dict[int, int] = field(default_factory=dict)
    row_count: int = 0
    total_tokens: int = 0

    @property
    def avg_doc_length(self) -> float:
        return self.total_tokens / self.row_count if self.row_count else 0.0

    def doc_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))


def build_shard_index(shard_id: int, docs: Iterable[tuple[int, list[str]]]) -> IndexShard:
    """Index (row_id, tokens) pairs; postings stay sorted by row id because
    rows arrive in id order within a shard."""
    shard = IndexShard(shard_id=shard_id)
    for row_id, tokens in docs:
        shard.row_count += 1
        shard.doc_lengths[row_id] = len(tokens)
        shard.total_tokens += len(tokens)
        for term, tf in Counter(tokens).items():
            shard.postings.setdefault(term, []).append((row_id, tf))
    return shard


def idf(shard: IndexShard, term: str) -> float:
    df = shard.doc_frequency(term)
    return math.log(1.0 + (shard.row_count - df + 0.5) / (df + 0.5))


def bm25_score(
    shard: IndexShard,
    query_terms: list[str],
    row_id: int,
    k1: float = BM25_K1,
    b: float = BM25_B,
) -> float:
    """Shard-local BM25 of one document against the query terms.

    Absent terms contribute zero. Repeated query terms contribute once per
    occurrence, matching the summed-over-query-terms form.
    """
    if row_id not in shard.doc_lengths:
        raise KeyError(f"row {row_id} not in shard {shard.shard_id}")
    dl = shard.doc_lengths[row_id]
    avgdl = shard.avg_doc_length
    score = 0.0
    for term in query_terms:
        entries = shard.postings.get(term)
        if not entries:
            continue
        tf = 0
        for rid, freq in entries:
            if rid == row_id:
                tf = freq
                break
        if tf == 0:
            continue
        denom = tf + k1 * (1.0 - b + b * dl / avgdl)
        score += idf(shard, term) * tf * (k1 + 1.0) / denom
    return score


def _shard_top_k(shard: IndexShard, query_terms: list[str], k: int) -> list[tuple[float, int]]:
    """Exhaustive disjunctive scoring of this shard's matching rows."""
    if shard.row_count == 0:
        return []
    avgdl = shard.avg_doc_length
    scores: dict[int, float] = {}
    for term in set(query_terms):
        entries = shard.postings.get(term)
        if not entries:
            continue
        term_idf = idf(shard, term)
        mult = query_terms.count(term)
        for row_id, tf in entries:
            dl = shard.doc_lengths[row_id]
            denom = tf + BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl)
            scores[row_id] = scores.get(row_id, 0.0) + mult * term_idf * tf * (BM25_K1 + 1.0) / denom
    if k >= len(scores):
        ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    else:
        ranked = heapq.nsmallest(k, scores.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(score, row_id) for row_id, score in ranked]


class TextIndex:
    """A set of shard indexes searched together."""

    def __init__(self, shards: list[IndexShard]):
        self.shards = shards

    @classmethod
    def build(cls, shard_docs: list[list[tuple[int, list[str]]]]) -> TextIndex:
        return cls([build_shard_index(i, docs) for i, docs in enumerate(shard_docs)])

    def search(self, query: str, k: int, live=None) -> list[tuple[int, float]]:
        """Top-k (row_id, score), descending score, ties by ascending row id.

        `live` optionally restricts to a subset of shard ids (dead shards are
        simply skipped; search degrades instead of failing).
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        terms = tokenize(query)
        if not terms:
            return []
        merged: list[tuple[float, int]] = []
        for shard in self.shards:
            if live is not None and shard.shard_id not in live:
                continue
            merged.extend(_shard_top_k(shard, terms, k))
        merged.sort(key=lambda pair: (-pair[0], pair[1]))
        return [(row_id, score) for score, row_id in merged[:k]]
