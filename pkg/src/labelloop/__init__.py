"""labelloop: an interactive machine-teaching engine for rare-positive
classification over large text collections.

A teacher (human or simulated) searches, labels, and defines features; the
engine trains, calibrates, scores, and actively samples in a tight loop on
top of an in-memory, shard-partitioned column store.
"""

from .calibration import IsotonicMap, fit_isotonic
from .engine import (
    AggregationSpec,
    ColumnDef,
    ColumnKind,
    Engine,
    Predicate,
    ScoreRange,
    ValueType,
)
from .features import (
    BowTfidfFeature,
    BowVocabulary,
    DictionaryFeature,
    FeatureSpace,
    ModelScoreFeature,
    build_bow_vocabulary,
    dictionary_stats,
    tfidf_vector,
)
from .metrics import auc, evaluate, pr_curve, recall_at_precision
from .raw_store import DatasetManifest, RawStore, append_records, import_items
from .service import LoopService, SampleRequest
from .session import SessionLog, SessionState, SplitAssignment
from .text_index import TextIndex, bm25_score
from .tokens import tokenize
from .trainer import LinearModel, TrainerFamily, TrainingSet, fit, loss_and_gradient, train_family

__version__ = "0.1.0"

__all__ = [
    "AggregationSpec",
    "BowTfidfFeature",
    "BowVocabulary",
    "ColumnDef",
    "ColumnKind",
    "DatasetManifest",
    "DictionaryFeature",
    "Engine",
    "FeatureSpace",
    "IsotonicMap",
    "LinearModel",
    "LoopService",
    "ModelScoreFeature",
    "Predicate",
    "RawStore",
    "SampleRequest",
    "ScoreRange",
    "SessionLog",
    "SessionState",
    "SplitAssignment",
    "TextIndex",
    "TrainerFamily",
    "TrainingSet",
    "ValueType",
    "append_records",
    "auc",
    "bm25_score",
    "build_bow_vocabulary",
    "dictionary_stats",
    "evaluate",
    "fit",
    "fit_isotonic",
    "import_items",
    "loss_and_gradient",
    "pr_curve",
    "recall_at_precision",
    "tfidf_vector",
    "tokenize",
    "train_family",
]
