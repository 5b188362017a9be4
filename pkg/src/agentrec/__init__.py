"""Recommend single agents or whole agent systems from execution traces.

Stage 1 retrieves a shortlist by embedding similarity; stage 2 reranks it with
a small linear model over relevance, reliability, cooperation and structure
features.
"""

from agentrec.corpus import Corpus, SystemCandidate
from agentrec.encoder import Encoder, cosine, encode_text, load_external_embeddings, serialize_graph
from agentrec.evaluation import (
    EvalConfig,
    EvalReport,
    TokenCostParams,
    evaluate,
    split_dataset,
    token_cost,
    train_model,
)
from agentrec.features import NormalizationStats, fit_normalizer, raw_features
from agentrec.ingest import IngestResult, ingest, load_corpus, save_corpus
from agentrec.pipeline import Recommendation, recommend, rerank, retrieve
from agentrec.ranker import Model, Slate, TrainConfig, build_slate, load_model, save_model, train
from agentrec.trace import AgentRecord, CallingTree, CallNode, DecisionInstance

__version__ = "0.1.0"

__all__ = [
    "AgentRecord",
    "CallNode",
    "CallingTree",
    "Corpus",
    "DecisionInstance",
    "Encoder",
    "EvalConfig",
    "EvalReport",
    "IngestResult",
    "Model",
    "NormalizationStats",
    "Recommendation",
    "Slate",
    "SystemCandidate",
    "TokenCostParams",
    "TrainConfig",
    "build_slate",
    "cosine",
    "encode_text",
    "evaluate",
    "fit_normalizer",
    "ingest",
    "load_corpus",
    "load_external_embeddings",
    "load_model",
    "raw_features",
    "recommend",
    "rerank",
    "retrieve",
    "save_corpus",
    "save_model",
    "serialize_graph",
    "split_dataset",
    "token_cost",
    "train",
    "train_model",
]
