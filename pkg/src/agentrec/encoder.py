"""Deterministic text/graph embeddings and cosine similarity.

The built-in encoder is a hashed bag of tokens:

* text is lowercased and split on every run of non-alphanumeric characters
  (underscore counts as a separator);
* each token is hashed with BLAKE2b (8-byte digest, read as an unsigned
  little-endian integer) and reduced modulo the dimension;
* bucket counts are L2-normalised; empty text maps to the zero vector.

Precomputed vectors from a sidecar file take precedence over the built-in
encoder, keyed by agent id or session id.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Mapping

import numpy as np

from agentrec.trace import AgentRecord, CallingTree

DEFAULT_DIM = 256
EDGE_MARKER = " CALLER->CALLEE "

_TOKEN_RE = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


def bucket(token: str, dim: int = DEFAULT_DIM) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


@lru_cache(maxsize=65536)
def encode_text(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    vec = np.zeros(dim)
    for token in tokenize(text):
        vec[bucket(token, dim)] += 1.0
    norm = np.sqrt(vec @ vec)
    if norm > 0:
        vec /= norm
    vec.flags.writeable = False
    return vec


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.sqrt(u @ u)
    nv = np.sqrt(v @ v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(np.clip((u @ v) / (nu * nv), -1.0, 1.0))


def node_label(agent_id: str, agents: Mapping[str, AgentRecord] | None = None) -> str:
    agent = (agents or {}).get(agent_id)
    if agent is None:
        return agent_id
    if agent.description:
        escaped = agent.description.replace(")", "\\)")
        return f"{agent.name} ({escaped})"
    return agent.name


def serialize_graph(tree: CallingTree, agents: Mapping[str, AgentRecord] | None = None) -> str:
    """Preorder linearisation of a calling tree.

    Each node renders as ``name (description)``, with ``)`` inside the
    description escaped as ``\\)``; an empty description renders as just
    ``name`` and an unknown agent as its raw id.
    Every non-root node is preceded by ``EDGE_MARKER``; children are visited
    in (timestamp, node_id) order.
    """
    parts = []
    for node in tree.preorder():
        if node.parent is not None:
            parts.append(EDGE_MARKER)
        parts.append(node_label(node.agent_id, agents))
    return "".join(parts)


@dataclass(frozen=True)
class Sidecar:
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    dim: int | None = None
    digest: str = ""

    def __len__(self) -> int:
        return len(self.vectors)


def load_external_embeddings(path: str | Path) -> Sidecar:
    """Read a JSON Lines file of ``{"id": ..., "vector": [...]}`` records."""
    raw = Path(path).read_bytes()
    vectors: dict[str, np.ndarray] = {}
    for lineno, line in enumerate(raw.decode("utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        key = str(rec["id"])
        if key in vectors:
            warnings.warn(f"duplicate sidecar id {key!r} at line {lineno}; last occurrence wins")
        vec = np.asarray(rec["vector"], dtype=float)
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"non-finite entries in sidecar vector {key!r}")
        vectors[key] = vec
    if not vectors:
        return Sidecar(digest=hashlib.sha256(raw).hexdigest())
    dims = {k: v.shape[0] for k, v in vectors.items()}
    first = next(iter(dims.values()))
    ragged = sorted(k for k, d in dims.items() if d != first)
    if ragged:
        raise ValueError(f"ragged sidecar dimensions (expected {first}): {', '.join(ragged)}")
    for v in vectors.values():
        v.flags.writeable = False
    return Sidecar(vectors=vectors, dim=first, digest=hashlib.sha256(raw).hexdigest())


class Encoder:
    """Built-in hashing encoder with optional sidecar overrides."""

    def __init__(self, dim: int = DEFAULT_DIM, sidecar: Sidecar | None = None):
        self.sidecar = sidecar or Sidecar()
        self.dim = self.sidecar.dim or dim

    @property
    def digest(self) -> str:
        return self.sidecar.digest

    def encode_text(self, text: str) -> np.ndarray:
        return encode_text(text, self.dim)

    def encode_agent(self, agent: AgentRecord) -> np.ndarray:
        if agent.id in self.sidecar.vectors:
            return self.sidecar.vectors[agent.id]
        return encode_text(agent.text, self.dim)

    def encode_graph(self, tree: CallingTree, agents: Mapping[str, AgentRecord] | None = None) -> np.ndarray:
        if tree.session_id in self.sidecar.vectors:
            return self.sidecar.vectors[tree.session_id]
        return encode_text(serialize_graph(tree, agents), self.dim)
