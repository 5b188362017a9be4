"""In-memory corpus: trees, agent pool, network and cached embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

import numpy as np

from agentrec.encoder import Encoder, serialize_graph
from agentrec.trace import AgentNetwork, AgentRecord, CallingTree, build_agent_network, validate_tree


@dataclass(frozen=True)
class SystemCandidate:
    """A historical calling tree offered as a whole agent system."""

    session_id: str
    graph: CallingTree
    serialized: str

    @property
    def id(self) -> str:
        return self.session_id


class Corpus:
    def __init__(
        self,
        trees: Iterable[CallingTree],
        pool: Iterable[AgentRecord],
        encoder: Encoder | None = None,
    ):
        self.trees = sorted(trees, key=lambda t: t.session_id)
        self.pool = sorted(pool, key=lambda a: a.id)
        self.encoder = encoder or Encoder()
        self.agents = {a.id: a for a in self.pool}
        self.sessions = {t.session_id: t for t in self.trees}
        self.feature_cache: dict = {}
        for tree in self.trees:
            problems = validate_tree(tree)
            if problems:
                raise ValueError(f"session {tree.session_id}: {problems[0]}")

    @cached_property
    def network(self) -> AgentNetwork:
        return build_agent_network(self.trees, self.pool)

    @cached_property
    def systems(self) -> list[SystemCandidate]:
        return [
            SystemCandidate(t.session_id, t, serialize_graph(t, self.agents))
            for t in self.trees
        ]

    @cached_property
    def systems_by_id(self) -> dict[str, SystemCandidate]:
        return {s.session_id: s for s in self.systems}

    @cached_property
    def agent_ids(self) -> list[str]:
        return [a.id for a in self.pool]

    @cached_property
    def agent_matrix(self) -> np.ndarray:
        """Rows are agent embeddings in ``agent_ids`` order."""
        return self._stack([self.encoder.encode_agent(a) for a in self.pool])

    @cached_property
    def system_ids(self) -> list[str]:
        return [s.session_id for s in self.systems]

    @cached_property
    def system_matrix(self) -> np.ndarray:
        return self._stack([self.encoder.encode_graph(s.graph, self.agents) for s in self.systems])

    def _stack(self, rows: list[np.ndarray]) -> np.ndarray:
        if not rows:
            return np.zeros((0, self.encoder.dim))
        return np.vstack(rows)

    def candidate(self, kind: str, cid: str) -> AgentRecord | SystemCandidate:
        return self.agents[cid] if kind == "agent" else self.systems_by_id[cid]
