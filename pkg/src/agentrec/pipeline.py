"""Two-stage recommendation: cosine retrieval, then rerank with a learned scorer."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Literal

import numpy as np

from agentrec.corpus import Corpus
from agentrec.features import raw_features
from agentrec.ranker import Scorer, ranked

DEFAULT_K = 20
DEFAULT_K_LARGE = 10

Mode = Literal["direct", "two_stage"]


@dataclass(frozen=True)
class Recommendation:
    query: str
    candidates: tuple[tuple[str, float, float], ...]  # (id, stage-1 similarity, stage-2 score)
    chosen: str
    k_used: int
    stage: Mode

    def to_dict(self) -> dict:
        return {
            "query": self.query,
            "chosen": self.chosen,
            "k_used": self.k_used,
            "stage": self.stage,
            "candidates": [
                {"id": cid, "stage1_similarity": sim, "stage2_score": sc} for cid, sim, sc in self.candidates
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @property
    def ranking(self) -> list[str]:
        return [c[0] for c in self.candidates]


def _top_k(query: str, ids: list[str], matrix: np.ndarray, corpus: Corpus, k: int) -> list[tuple[str, float]]:
    if k < 1:
        raise ValueError("K must be >= 1")
    if not ids:
        raise ValueError("candidate pool is empty")
    q = corpus.encoder.encode_text(query)
    qn = np.sqrt(q @ q)
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    denom = norms * qn
    sims = np.divide(matrix @ q, denom, out=np.zeros(len(ids)), where=denom > 0)
    sims = np.clip(sims, -1.0, 1.0)
    order = sorted(range(len(ids)), key=lambda i: (-sims[i], ids[i]))
    return [(ids[i], float(sims[i])) for i in order[:k]]


def retrieve_agents(query: str, corpus: Corpus, k: int = DEFAULT_K) -> list[tuple[str, float]]:
    """Top-``k`` agents by cosine similarity, ties broken by id."""
    return _top_k(query, corpus.agent_ids, corpus.agent_matrix, corpus, k)


def retrieve_systems(query: str, corpus: Corpus, k: int = DEFAULT_K) -> list[tuple[str, float]]:
    """Top-``k`` historical sessions by cosine similarity to their serialised graphs."""
    return _top_k(query, corpus.system_ids, corpus.system_matrix, corpus, k)


def retrieve(query: str, corpus: Corpus, kind: str, k: int) -> list[tuple[str, float]]:
    return retrieve_agents(query, corpus, k) if kind == "agent" else retrieve_systems(query, corpus, k)


def rerank(
    model: Scorer,
    query: str,
    stage1: list[tuple[str, float]],
    corpus: Corpus,
    stage: Mode = "two_stage",
) -> Recommendation:
    if not stage1:
        raise ValueError("empty feasible set")
    ids = [cid for cid, _ in stage1]
    candidates = [corpus.candidate(model.kind, cid) for cid in ids]
    scores = model.scores(raw_features(query, candidates, corpus, getattr(model, "normalizer", None)))
    order = ranked(scores, ids)
    rows = tuple((ids[i], stage1[i][1], float(scores[i])) for i in order)
    return Recommendation(query=query, candidates=rows, chosen=rows[0][0], k_used=len(ids), stage=stage)


def recommend(
    model: Scorer,
    query: str,
    corpus: Corpus,
    mode: Mode = "two_stage",
    k: int = DEFAULT_K,
) -> Recommendation:
    """Retrieve-then-rerank, or (``mode="direct"``) score the whole pool."""
    if mode == "direct":
        size = len(corpus.agent_ids) if model.kind == "agent" else len(corpus.system_ids)
        stage1 = retrieve(query, corpus, model.kind, max(size, 1))
        return rerank(model, query, stage1, corpus, stage="direct")
    if mode != "two_stage":
        raise ValueError(f"unknown mode {mode!r}")
    return rerank(model, query, retrieve(query, corpus, model.kind, k), corpus)
