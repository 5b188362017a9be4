"""Core domain types: agents, calling trees, agent networks and decision instances."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Literal, Mapping

Status = Literal["success", "failure", "unknown"]
STATUSES: tuple[str, ...] = ("success", "failure", "unknown")

ORCHESTRATOR_ID = "__orchestrator__"


@dataclass(frozen=True)
class AgentRecord:
    id: str
    name: str
    description: str = ""
    tags: tuple[str, ...] = ()
    category: str | None = None
    invocation_count: int = 0
    success_count: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("agent id must be non-empty")
        if self.invocation_count < 0 or not 0 <= self.success_count <= self.invocation_count:
            raise ValueError(
                f"agent {self.id}: need 0 <= success_count <= invocation_count, "
                f"got {self.success_count}/{self.invocation_count}"
            )
        object.__setattr__(self, "tags", tuple(self.tags))

    @property
    def text(self) -> str:
        """Name, description and tags joined with single spaces."""
        return " ".join([self.name, self.description, " ".join(self.tags)])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "tags": list(self.tags),
            "category": self.category,
            "invocation_count": self.invocation_count,
            "success_count": self.success_count,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> AgentRecord:
        return cls(
            id=d["id"],
            name=d.get("name") or d["id"],
            description=d.get("description") or "",
            tags=tuple(d.get("tags") or ()),
            category=d.get("category"),
            invocation_count=int(d.get("invocation_count", 0)),
            success_count=int(d.get("success_count", 0)),
        )


@dataclass(frozen=True)
class CallNode:
    node_id: str
    agent_id: str
    task_text: str = ""
    timestamp: float | None = None
    status: Status = "unknown"
    parent: str | None = None
    latency_ms: float | None = None
    token_count: int | None = None

    def to_dict(self) -> dict:
        d = {
            "node_id": self.node_id,
            "agent_id": self.agent_id,
            "task_text": self.task_text,
            "timestamp": self.timestamp,
            "status": self.status,
            "parent": self.parent,
        }
        if self.latency_ms is not None:
            d["latency_ms"] = self.latency_ms
        if self.token_count is not None:
            d["token_count"] = self.token_count
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> CallNode:
        return cls(
            node_id=str(d["node_id"]),
            agent_id=str(d["agent_id"]),
            task_text=d.get("task_text") or "",
            timestamp=d.get("timestamp"),
            status=d.get("status") or "unknown",
            parent=d.get("parent"),
            latency_ms=d.get("latency_ms"),
            token_count=d.get("token_count"),
        )


def natural_key(node_id: str) -> tuple:
    """Sort key that orders ``n2`` before ``n10``."""
    return tuple(int(p) if p.isdigit() else p for p in re.split(r"(\d+)", node_id))


def child_order_key(node: CallNode) -> tuple:
    # missing timestamps sort after present ones; node_id breaks ties
    ts = node.timestamp
    return (ts is None, 0.0 if ts is None else ts, natural_key(node.node_id))


@dataclass(frozen=True)
class CallingTree:
    session_id: str
    session_query: str
    nodes: tuple[CallNode, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))

    @cached_property
    def by_id(self) -> dict[str, CallNode]:
        return {n.node_id: n for n in self.nodes}

    @cached_property
    def children(self) -> dict[str, list[CallNode]]:
        """Child lists keyed by node id, in (timestamp, node_id) order."""
        out: dict[str, list[CallNode]] = {n.node_id: [] for n in self.nodes}
        for n in self.nodes:
            if n.parent is not None and n.parent in out:
                out[n.parent].append(n)
        for kids in out.values():
            kids.sort(key=child_order_key)
        return out

    @cached_property
    def root(self) -> CallNode:
        roots = [n for n in self.nodes if n.parent is None]
        if len(roots) != 1:
            raise ValueError(f"session {self.session_id}: expected one root, found {len(roots)}")
        return roots[0]

    def preorder(self) -> list[CallNode]:
        out: list[CallNode] = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            stack.extend(reversed(self.children[node.node_id]))
        return out

    def ancestors(self, node_id: str) -> list[CallNode]:
        """Ancestors of ``node_id`` from parent up to root."""
        out = []
        cur = self.by_id[node_id].parent
        while cur is not None:
            node = self.by_id[cur]
            out.append(node)
            cur = node.parent
        return out

    def depth_of(self, node_id: str) -> int:
        return len(self.ancestors(node_id))

    @property
    def edges(self) -> list[tuple[CallNode, CallNode]]:
        return [(self.by_id[n.parent], n) for n in self.nodes if n.parent is not None]

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "session_query": self.session_query,
            "nodes": [n.to_dict() for n in self.nodes],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> CallingTree:
        return cls(
            session_id=str(d["session_id"]),
            session_query=d.get("session_query") or "",
            nodes=tuple(CallNode.from_dict(n) for n in d["nodes"]),
        )


def validate_tree(tree: CallingTree) -> list[str]:
    """Return violation descriptions; an empty list means the tree is well formed."""
    problems: list[str] = []
    ids = Counter(n.node_id for n in tree.nodes)
    for node_id, count in ids.items():
        if count > 1:
            problems.append(f"duplicate node_id: {node_id}")
    if not tree.nodes:
        return ["empty tree"]

    by_id = {n.node_id: n for n in tree.nodes}
    roots = [n.node_id for n in tree.nodes if n.parent is None]
    if not roots:
        problems.append("no root")
    elif len(roots) > 1:
        problems.append("multiple roots: " + ", ".join(roots))

    for n in tree.nodes:
        if n.status not in STATUSES:
            problems.append(f"bad status: {n.node_id}")
        if n.parent is None:
            continue
        if n.parent not in by_id:
            problems.append(f"dangling parent: {n.node_id}")
            continue
        if n.parent == n.node_id:
            problems.append(f"self loop: {n.node_id}")
            continue
        parent = by_id[n.parent]
        if (
            parent.timestamp is not None
            and n.timestamp is not None
            and parent.timestamp > n.timestamp
        ):
            problems.append(f"timestamp inversion: {n.node_id}")

    # reachability: walk each parent chain, bounded by node count
    for n in tree.nodes:
        seen = {n.node_id}
        cur = n.parent
        while cur is not None and cur in by_id:
            if cur in seen:
                problems.append(f"cycle: {n.node_id}")
                break
            seen.add(cur)
            cur = by_id[cur].parent
    return problems


@dataclass(frozen=True)
class AgentNetwork:
    agents: tuple[AgentRecord, ...]
    edges: Mapping[tuple[str, str], int] = field(default_factory=dict)

    @cached_property
    def by_id(self) -> dict[str, AgentRecord]:
        return {a.id: a for a in self.agents}

    def neighbors(self, agent_id: str) -> dict[str, int]:
        """Callees of ``agent_id`` with observation counts."""
        return {dst: c for (src, dst), c in self.edges.items() if src == agent_id}


def build_agent_network(trees: Iterable[CallingTree], pool: Iterable[AgentRecord]) -> AgentNetwork:
    pool = tuple(pool)
    known = {a.id for a in pool}
    edges: Counter[tuple[str, str]] = Counter()
    for tree in trees:
        for node in tree.nodes:
            if node.agent_id not in known:
                raise KeyError(f"unknown agent_id {node.agent_id!r} in session {tree.session_id}")
        for parent, child in tree.edges:
            edges[(parent.agent_id, child.agent_id)] += 1
    return AgentNetwork(agents=pool, edges=dict(sorted(edges.items())))


@dataclass(frozen=True)
class DecisionInstance:
    instance_id: str
    query: str
    kind: Literal["agent", "system"]
    gold_id: str
    context_node_count: int = 0
    label: float = 1.0
    session_id: str = ""


def fallback_query(tree: CallingTree, node: CallNode, names: Mapping[str, str] | None = None) -> str:
    """Positional query for a node that carries no task text."""
    parent = tree.by_id[node.parent]
    parent_name = (names or {}).get(parent.agent_id, parent.agent_id)
    depth = tree.depth_of(node.node_id)
    return f"{tree.session_query} | step {depth}: after {parent_name}"


def extract_agent_instances(
    trees: Iterable[CallingTree], pool: Iterable[AgentRecord] | None = None
) -> list[DecisionInstance]:
    """One agent-selection instance per non-root node.

    ``pool`` only supplies agent names for the fallback query of nodes with no task text.
    """
    names = {a.id: a.name for a in pool} if pool is not None else None
    out = []
    for tree in trees:
        for node in tree.preorder():
            if node.parent is None:
                continue
            query = node.task_text or fallback_query(tree, node, names)
            out.append(
                DecisionInstance(
                    instance_id=f"{tree.session_id}/{node.node_id}",
                    query=query,
                    kind="agent",
                    gold_id=node.agent_id,
                    context_node_count=len(tree.ancestors(node.node_id)),
                    session_id=tree.session_id,
                )
            )
    return out


def extract_system_instances(
    trees: Iterable[CallingTree], skipped: list | None = None
) -> list[DecisionInstance]:
    """One system-selection instance per session whose query is non-empty.

    Sessions without a query are appended to ``skipped`` as report dicts.
    """
    out = []
    for tree in trees:
        if not tree.session_query.strip():
            if skipped is not None:
                skipped.append(
                    {"session_id": tree.session_id, "rule": "empty_session_query", "detail": "instance skipped"}
                )
            continue
        out.append(
            DecisionInstance(
                instance_id=tree.session_id,
                query=tree.session_query,
                kind="system",
                gold_id=tree.session_id,
                context_node_count=0,
                session_id=tree.session_id,
            )
        )
    return out
