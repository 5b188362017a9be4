"""Candidate features: relevance, reliability, cooperation and structure.

Every candidate gets a four-entry feature vector ``[rel, hist, coop, struct]``.
Agents and systems (whole calling trees) share the layout but fill it
differently:

==========  ==================================  ====================================
feature     agent                               system
==========  ==================================  ====================================
rel         cos(query, agent text)              cos(query, serialized graph)
hist        Laplace-smoothed success rate       mean smoothed rate over graph nodes
coop        0.5 Jaccard + 0.5 cos on name/tags  w_coop . z(|V|,|E|,depth,branch,uniq)
struct      sigmoid(w_struct[0] z(log1p calls)) sigmoid(w_struct . z(stats + density))
==========  ==================================  ====================================

:class:`RawFeatures` holds the parts that do not depend on the trainable
inner weights, so the ranker can recompute coop/struct cheaply while training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from agentrec.corpus import Corpus, SystemCandidate
from agentrec.encoder import Encoder, cosine, tokenize
from agentrec.trace import AgentNetwork, AgentRecord, CallingTree

COOP_STATS = ("nodes", "edges", "depth", "branch", "tool_uniq")
STRUCT_STATS = COOP_STATS + ("density",)
N_COOP = len(COOP_STATS)
N_STRUCT = len(STRUCT_STATS)

# sigmoid pre-activations are clipped so outputs stay strictly inside (0, 1)
LOGIT_CLIP = 30.0


def sigmoid(x):
    x = np.clip(x, -LOGIT_CLIP, LOGIT_CLIP)
    return np.exp(-np.logaddexp(0.0, -x))


@dataclass(frozen=True)
class GraphStats:
    node_count: int
    edge_count: int
    depth: int
    branch: float
    tool_uniq: int
    density: float

    def vector(self) -> np.ndarray:
        return np.array(
            [self.node_count, self.edge_count, self.depth, self.branch, self.tool_uniq, self.density],
            dtype=float,
        )


def graph_stats(graph: CallingTree | SystemCandidate) -> GraphStats:
    if isinstance(graph, SystemCandidate):
        graph = graph.graph
    n = len(graph.nodes)
    e = sum(1 for node in graph.nodes if node.parent is not None)
    depth = 0
    frontier = [(graph.root, 0)]
    while frontier:
        node, d = frontier.pop()
        depth = max(depth, d)
        frontier.extend((c, d + 1) for c in graph.children[node.node_id])
    internal = sum(1 for kids in graph.children.values() if kids)
    return GraphStats(
        node_count=n,
        edge_count=e,
        depth=depth,
        branch=e / internal if internal else 0.0,
        tool_uniq=len({node.agent_id for node in graph.nodes}),
        density=2 * e / (n * (n - 1)) if n >= 2 else 0.0,
    )


@dataclass(frozen=True)
class NormalizationStats:
    """Z-score parameters fitted on the training split.

    ``mean``/``std`` follow ``STRUCT_STATS``; ``pop_mean``/``pop_std`` are for
    the agent popularity proxy ``log1p(invocation_count)``.
    """

    mean: tuple[float, ...] = (0.0,) * N_STRUCT
    std: tuple[float, ...] = (1.0,) * N_STRUCT
    pop_mean: float = 0.0
    pop_std: float = 1.0

    def z_graph(self, stats: GraphStats) -> np.ndarray:
        std = np.asarray(self.std)
        std = np.where(std == 0, 1.0, std)
        return (stats.vector() - np.asarray(self.mean)) / std

    def z_popularity(self, invocation_count: int) -> float:
        std = self.pop_std or 1.0
        return (math.log1p(invocation_count) - self.pop_mean) / std

    def to_dict(self) -> dict:
        return {
            "mean": list(self.mean),
            "std": list(self.std),
            "pop_mean": self.pop_mean,
            "pop_std": self.pop_std,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> NormalizationStats:
        mean = tuple(float(x) for x in d["mean"])
        std = tuple(float(x) for x in d["std"])
        if len(mean) != N_STRUCT or len(std) != N_STRUCT:
            raise ValueError(f"normalizer needs {N_STRUCT} means and stds")
        return cls(mean, std, float(d["pop_mean"]), float(d["pop_std"]))


def fit_normalizer(
    graphs: Sequence[CallingTree | SystemCandidate], pool: Sequence[AgentRecord] = ()
) -> NormalizationStats:
    """Population mean/std of graph statistics (and agent log-counts, if given)."""
    if not graphs:
        raise ValueError("fit_normalizer needs at least one training graph")
    mat = np.vstack([graph_stats(g).vector() for g in graphs])
    pop_mean, pop_std = 0.0, 1.0
    if len(pool):
        logs = np.log1p([a.invocation_count for a in pool])
        pop_mean, pop_std = float(logs.mean()), float(logs.std())
    return NormalizationStats(
        mean=tuple(float(x) for x in mat.mean(axis=0)),
        std=tuple(float(x) for x in mat.std(axis=0)),
        pop_mean=pop_mean,
        pop_std=pop_std,
    )


def smoothed_rate(success_count: int, invocation_count: int) -> float:
    return (success_count + 1) / (invocation_count + 2)


def jaccard(a: set, b: set) -> float:
    union = a | b
    return len(a & b) / len(union) if union else 0.0


def phi_rel(
    query: str,
    candidate: AgentRecord | SystemCandidate | CallingTree,
    encoder: Encoder | None = None,
    agents: Mapping[str, AgentRecord] | None = None,
) -> float:
    encoder = encoder or Encoder()
    q = encoder.encode_text(query)
    if isinstance(candidate, AgentRecord):
        return cosine(q, encoder.encode_agent(candidate))
    graph = candidate.graph if isinstance(candidate, SystemCandidate) else candidate
    return cosine(q, encoder.encode_graph(graph, agents))


def phi_hist(
    candidate: AgentRecord | SystemCandidate | CallingTree,
    agents: Mapping[str, AgentRecord] | None = None,
) -> float:
    if isinstance(candidate, AgentRecord):
        return smoothed_rate(candidate.success_count, candidate.invocation_count)
    graph = candidate.graph if isinstance(candidate, SystemCandidate) else candidate
    agents = agents or {}
    rates = []
    for node in graph.nodes:
        a = agents.get(node.agent_id)
        rates.append(smoothed_rate(a.success_count, a.invocation_count) if a else 0.5)
    return sum(rates) / len(rates)


def phi_coop_agent(
    query: str,
    agent: AgentRecord,
    network: AgentNetwork | None = None,
    encoder: Encoder | None = None,
) -> float:
    """Lexical plus embedding overlap between the query and the agent's name and tags.

    ``network`` is accepted for interface symmetry; the agent case uses no edges.
    """
    encoder = encoder or Encoder()
    label = " ".join([agent.name, *agent.tags])
    overlap = jaccard(set(tokenize(query)), set(tokenize(label)))
    return 0.5 * overlap + 0.5 * cosine(encoder.encode_text(query), encoder.encode_text(label))


def _require(normalizer: NormalizationStats | None) -> NormalizationStats:
    if normalizer is None:
        raise ValueError("normalizer not fitted")
    return normalizer


def phi_coop_graph(
    query: str,
    graph: CallingTree | SystemCandidate,
    w_coop: Sequence[float],
    normalizer: NormalizationStats | None,
) -> float:
    z = _require(normalizer).z_graph(graph_stats(graph))[:N_COOP]
    return float(np.dot(np.asarray(w_coop, dtype=float), z))


def phi_struct(
    candidate: AgentRecord | SystemCandidate | CallingTree,
    w_struct: Sequence[float],
    normalizer: NormalizationStats | None,
) -> float:
    w_struct = np.asarray(w_struct, dtype=float)
    if isinstance(candidate, AgentRecord):
        if normalizer is None:
            z = math.log1p(candidate.invocation_count)
        else:
            z = normalizer.z_popularity(candidate.invocation_count)
        return float(sigmoid(w_struct[0] * z))
    z = _require(normalizer).z_graph(graph_stats(candidate))
    return float(sigmoid(np.dot(w_struct, z)))


@dataclass(frozen=True)
class FeatureVector:
    rel: float
    hist: float
    coop: float
    struct_: float

    def as_array(self) -> np.ndarray:
        return np.array([self.rel, self.hist, self.coop, self.struct_])


@dataclass(frozen=True)
class RawFeatures:
    """Weight-independent parts of a slate's features, one row per candidate.

    ``coop = coop_fixed + coop_stats @ w_coop`` and
    ``struct = sigmoid(struct_stats @ w_struct)``.
    """

    rel: np.ndarray
    hist: np.ndarray
    coop_fixed: np.ndarray
    coop_stats: np.ndarray
    struct_stats: np.ndarray

    def __len__(self) -> int:
        return self.rel.shape[0]

    def take(self, idx) -> RawFeatures:
        return RawFeatures(
            self.rel[idx], self.hist[idx], self.coop_fixed[idx], self.coop_stats[idx], self.struct_stats[idx]
        )

    def assemble(self, w_coop, w_struct) -> np.ndarray:
        """Feature matrix of shape (n, 4)."""
        coop = self.coop_fixed + (self.coop_stats * np.asarray(w_coop)).sum(axis=-1)
        struct = sigmoid((self.struct_stats * np.asarray(w_struct)).sum(axis=-1))
        return np.stack([self.rel, self.hist, coop, struct], axis=-1)


def _static_parts(
    c: AgentRecord | SystemCandidate, corpus: Corpus, normalizer: NormalizationStats | None
) -> tuple[float, np.ndarray, np.ndarray]:
    """(hist, coop_stats row, struct_stats row), memoised on the corpus."""
    key = (type(c).__name__, c.id, normalizer)
    hit = corpus.feature_cache.get(key)
    if hit is not None:
        return hit
    coop_row = np.zeros(N_COOP)
    struct_row = np.zeros(N_STRUCT)
    if isinstance(c, AgentRecord):
        if normalizer is None:
            struct_row[0] = math.log1p(c.invocation_count)
        else:
            struct_row[0] = normalizer.z_popularity(c.invocation_count)
    else:
        z = _require(normalizer).z_graph(graph_stats(c))
        coop_row[:] = z[:N_COOP]
        struct_row[:] = z
    out = (phi_hist(c, corpus.agents), coop_row, struct_row)
    corpus.feature_cache[key] = out
    return out


def raw_features(
    query: str,
    candidates: Sequence[AgentRecord | SystemCandidate],
    corpus: Corpus,
    normalizer: NormalizationStats | None,
) -> RawFeatures:
    n = len(candidates)
    rel = np.zeros(n)
    hist = np.zeros(n)
    coop_fixed = np.zeros(n)
    coop_stats = np.zeros((n, N_COOP))
    struct_stats = np.zeros((n, N_STRUCT))
    enc = corpus.encoder
    q = enc.encode_text(query)
    for k, c in enumerate(candidates):
        hist[k], coop_stats[k], struct_stats[k] = _static_parts(c, corpus, normalizer)
        if isinstance(c, AgentRecord):
            rel[k] = cosine(q, enc.encode_agent(c))
            coop_fixed[k] = phi_coop_agent(query, c, corpus.network, enc)
        else:
            rel[k] = cosine(q, enc.encode_graph(c.graph, corpus.agents))
    return RawFeatures(rel, hist, coop_fixed, coop_stats, struct_stats)


def assemble_features(
    query: str,
    candidate: AgentRecord | SystemCandidate,
    corpus: Corpus,
    w_coop: Sequence[float],
    w_struct: Sequence[float],
    normalizer: NormalizationStats | None,
) -> FeatureVector:
    row = raw_features(query, [candidate], corpus, normalizer).assemble(w_coop, w_struct)[0]
    return FeatureVector(*(float(x) for x in row))
