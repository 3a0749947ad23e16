"""Feature computation for text items.

Three feature kinds, all realized per row as sparse coordinates in one stable
id space: teacher-editable dictionaries with document-level statistics,
bag-of-words TF-IDF over a corpus-mined vocabulary, and frozen models used as
features. Edits never mutate a feature: they create a new version with fresh
coordinate ids, so historical models keep meaning what they meant.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

from .hashing import stable_hash
from .tokens import iter_ngrams, tokenize

STAT_MODES = ("total_count", "distinct_count", "binary_presence")
DEFAULT_SOURCE_COLUMN = "body_text"
BOW_DEFAULT_CAP = 10_000


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class DictionaryFeature:
    """A named token set standing in for a semantic concept."""

    name: str
    entries: frozenset[str]
    stat_modes: tuple[str, ...] = STAT_MODES
    source_column: str = DEFAULT_SOURCE_COLUMN

    @classmethod
    def from_words(
        cls,
        name: str,
        words: Iterable[str],
        stat_modes: tuple[str, ...] = STAT_MODES,
        source_column: str = DEFAULT_SOURCE_COLUMN,
    ) -> DictionaryFeature:
        """Normalize words through the shared tokenizer (multi-token phrases
        contribute each of their tokens)."""
        entries = set()
        for word in words:
            entries.update(tokenize(word))
        if not entries:
            raise FeatureError(f"dictionary {name!r} has no usable entries")
        for mode in stat_modes:
            if mode not in STAT_MODES:
                raise FeatureError(f"unknown stat mode {mode!r}")
        return cls(name, frozenset(entries), tuple(stat_modes), source_column)

    def to_doc(self) -> dict:
        return {
            "type": "dictionary",
            "name": self.name,
            "entries": sorted(self.entries),
            "stat_modes": list(self.stat_modes),
            "source_column": self.source_column,
        }


def dictionary_stats(tokens: list[str], feature: DictionaryFeature) -> dict[str, int]:
    """Document-level aggregation of dictionary hits."""
    total = 0
    distinct: set[str] = set()
    entries = feature.entries
    for token in tokens:
        if token in entries:
            total += 1
            distinct.add(token)
    return {
        "total_count": total,
        "distinct_count": len(distinct),
        "binary_presence": 1 if total > 0 else 0,
    }


@dataclass(frozen=True)
class BowVocabulary:
    """Top-cap n-grams by document frequency, mined from the loaded corpus."""

    terms: tuple[str, ...]
    doc_freqs: tuple[int, ...]
    doc_count: int
    max_n: int

    def index(self) -> dict[str, int]:
        # built once per vocabulary; tfidf_vector calls this per document
        cached = getattr(self, "_index", None)
        if cached is None:
            cached = {term: i for i, term in enumerate(self.terms)}
            object.__setattr__(self, "_index", cached)
        return cached

    def __len__(self) -> int:
        return len(self.terms)


def build_bow_vocabulary(
    token_docs: Iterable[list[str]], cap: int, max_n: int = 2
) -> BowVocabulary:
    """Document frequencies over the corpus; descending df, ties lexicographic."""
    if cap < 1:
        raise FeatureError("vocabulary cap must be >= 1")
    df: Counter[str] = Counter()
    n_docs = 0
    for tokens in token_docs:
        n_docs += 1
        df.update(set(iter_ngrams(tokens, max_n)))
    ranked = sorted(df.items(), key=lambda kv: (-kv[1], kv[0]))[:cap]
    return BowVocabulary(
        terms=tuple(term for term, _ in ranked),
        doc_freqs=tuple(count for _, count in ranked),
        doc_count=n_docs,
        max_n=max_n,
    )


def tfidf_vector(
    tokens: list[str], vocab: BowVocabulary, index: dict[str, int] | None = None
) -> dict[int, float]:
    """tf * ln(N/df) on vocabulary terms present, L2-normalized.

    Keys are vocabulary positions; no explicit zeros are stored.
    """
    if index is None:
        index = vocab.index()
    counts: Counter[str] = Counter(iter_ngrams(tokens, vocab.max_n))
    raw: dict[int, float] = {}
    for term, tf in counts.items():
        pos = index.get(term)
        if pos is None:
            continue
        idf = math.log(vocab.doc_count / vocab.doc_freqs[pos])
        if idf <= 0.0 or tf == 0:
            continue
        raw[pos] = tf * idf
    norm = math.sqrt(sum(v * v for v in raw.values()))
    if norm == 0.0:
        return {}
    return {pos: v / norm for pos, v in raw.items()}


@dataclass(frozen=True)
class BowTfidfFeature:
    name: str
    vocab: BowVocabulary
    source_column: str = DEFAULT_SOURCE_COLUMN

    def to_doc(self) -> dict:
        return {
            "type": "bow_tfidf",
            "name": self.name,
            "source_column": self.source_column,
            "doc_count": self.vocab.doc_count,
            "max_n": self.vocab.max_n,
            "terms": [[t, df] for t, df in zip(self.vocab.terms, self.vocab.doc_freqs)],
        }


@dataclass(frozen=True)
class ModelScoreFeature:
    """A frozen model snapshot scored as a single feature coordinate."""

    name: str
    export_doc: dict  # standalone model export; see labelloop.export

    def to_doc(self) -> dict:
        return {"type": "model_score", "name": self.name, "model": self.export_doc}


FeatureDefinition = DictionaryFeature | BowTfidfFeature | ModelScoreFeature


def definition_from_doc(doc: Mapping) -> FeatureDefinition:
    kind = doc.get("type")
    if kind == "dictionary":
        return DictionaryFeature(
            name=doc["name"],
            entries=frozenset(doc["entries"]),
            stat_modes=tuple(doc.get("stat_modes", STAT_MODES)),
            source_column=doc.get("source_column", DEFAULT_SOURCE_COLUMN),
        )
    if kind == "bow_tfidf":
        terms = tuple(t for t, _ in doc["terms"])
        doc_freqs = tuple(int(df) for _, df in doc["terms"])
        vocab = BowVocabulary(terms, doc_freqs, int(doc["doc_count"]), int(doc.get("max_n", 2)))
        return BowTfidfFeature(
            name=doc["name"],
            vocab=vocab,
            source_column=doc.get("source_column", DEFAULT_SOURCE_COLUMN),
        )
    if kind == "model_score":
        return ModelScoreFeature(name=doc["name"], export_doc=dict(doc["model"]))
    raise FeatureError(f"unknown feature type {kind!r}")


@dataclass(frozen=True)
class FeatureVersion:
    """An immutable (definition, coordinate ids) binding."""

    name: str
    version: int
    definition: FeatureDefinition
    base_id: int
    width: int

    @property
    def coord_ids(self) -> range:
        return range(self.base_id, self.base_id + self.width)

    def coord_names(self) -> list[str]:
        d = self.definition
        if isinstance(d, DictionaryFeature):
            return [f"{self.name}@{self.version}:{mode}" for mode in d.stat_modes]
        if isinstance(d, BowTfidfFeature):
            return [f"{self.name}@{self.version}:{t}" for t in d.vocab.terms]
        return [f"{self.name}@{self.version}:score"]

    def compute(self, record: Mapping[str, str], tokens_by_column: Mapping[str, list[str]]) -> dict[int, float]:
        d = self.definition
        if isinstance(d, DictionaryFeature):
            stats = dictionary_stats(tokens_by_column[d.source_column], d)
            out = {}
            for offset, mode in enumerate(d.stat_modes):
                value = stats[mode]
                if value:
                    out[self.base_id + offset] = float(value)
            return out
        if isinstance(d, BowTfidfFeature):
            local = tfidf_vector(tokens_by_column[d.source_column], d.vocab)
            return {self.base_id + pos: value for pos, value in local.items()}
        # Frozen model as a feature: scored standalone from the raw record.
        from .export import standalone_score

        return {self.base_id: standalone_score(d.export_doc, record)}

    def to_doc(self) -> dict:
        doc = self.definition.to_doc()
        doc["version"] = self.version
        doc["base_id"] = self.base_id
        doc["width"] = self.width
        return doc


def _definition_width(definition: FeatureDefinition) -> int:
    if isinstance(definition, DictionaryFeature):
        return len(definition.stat_modes)
    if isinstance(definition, BowTfidfFeature):
        return len(definition.vocab)
    return 1


class FeatureSpace:
    """Stable coordinate allocation over feature versions.

    Adding a feature never changes existing ids; removing one leaves a hole.
    The active set is what models train on; history keeps every version ever
    created so old models stay scoreable.
    """

    def __init__(self):
        self._next_id = 0
        self._version_counter: Counter[str] = Counter()
        self.active: list[FeatureVersion] = []
        self.history: list[FeatureVersion] = []

    @property
    def dim(self) -> int:
        return self._next_id

    def add(self, definition: FeatureDefinition) -> FeatureVersion:
        if any(fv.name == definition.name for fv in self.active):
            raise FeatureError(f"feature {definition.name!r} already active; edit it instead")
        return self._register(definition)

    def edit(self, name: str, definition: FeatureDefinition) -> FeatureVersion:
        self._drop(name)
        if definition.name != name:
            raise FeatureError("edits keep the feature name")
        return self._register(definition)

    def remove(self, name: str) -> FeatureVersion:
        if len(self.active) == 1 and self.active[0].name == name:
            raise FeatureError("cannot remove the last feature; models need at least one")
        return self._drop(name)

    def get_active(self, name: str) -> FeatureVersion:
        for fv in self.active:
            if fv.name == name:
                return fv
        raise FeatureError(f"no active feature named {name!r}")

    def _register(self, definition: FeatureDefinition) -> FeatureVersion:
        self._version_counter[definition.name] += 1
        fv = FeatureVersion(
            name=definition.name,
            version=self._version_counter[definition.name],
            definition=definition,
            base_id=self._next_id,
            width=_definition_width(definition),
        )
        self._next_id += fv.width
        self.active.append(fv)
        self.history.append(fv)
        return fv

    def _drop(self, name: str) -> FeatureVersion:
        for i, fv in enumerate(self.active):
            if fv.name == name:
                return self.active.pop(i)
        raise FeatureError(f"no active feature named {name!r}")

    def assemble(
        self, record: Mapping[str, str], tokens_by_column: Mapping[str, list[str]]
    ) -> dict[int, float]:
        """Concatenated sparse vector over the active versions."""
        out: dict[int, float] = {}
        for fv in self.active:
            out.update(fv.compute(record, tokens_by_column))
        return out

    def source_columns(self) -> set[str]:
        cols = set()
        for fv in self.active:
            d = fv.definition
            if isinstance(d, (DictionaryFeature, BowTfidfFeature)):
                cols.add(d.source_column)
        return cols

    def content_digest(self) -> str:
        """Identity of the active set; used to cache assembled columns."""
        parts = []
        for fv in self.active:
            parts.append(f"{fv.name}@{fv.version}#{fv.base_id}+{fv.width}")
            d = fv.definition
            if isinstance(d, DictionaryFeature):
                parts.append(",".join(sorted(d.entries)) + "|" + ",".join(d.stat_modes))
            elif isinstance(d, BowTfidfFeature):
                parts.append(f"bow:{d.vocab.doc_count}:{len(d.vocab)}:{d.vocab.max_n}")
                parts.extend(d.vocab.terms[:50])
            else:
                parts.append(f"model:{d.export_doc.get('model_version')}")
        return f"{stable_hash(*parts):016x}"
