"""Normalise raw execution events into calling trees and an agent pool.

Pipeline: ``parse_events`` -> ``resolve_parents`` -> ``build_tree`` ->
``build_agent_pool`` -> optional ``prune_degenerate``. Problems found along
the way are collected as :class:`Issue` records rather than raised, except
for I/O failures.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping

from agentrec.trace import (
    ORCHESTRATOR_ID,
    STATUSES,
    AgentRecord,
    CallingTree,
    CallNode,
)

log = logging.getLogger(__name__)

CORPUS_VERSION = 1
SYNTHETIC_ROOT_ID = "root"

_EVENT_FIELDS = (
    "session_id",
    "event_index",
    "timestamp",
    "agent_id",
    "agent_name",
    "agent_description",
    "tags",
    "span_id",
    "parent_span_id",
    "caller_index",
    "status",
    "latency_ms",
    "token_count",
    "cost",
    "category",
    "task_text",
    "session_query",
)


@dataclass(frozen=True)
class Issue:
    session_id: str
    rule: str
    detail: str

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class RawEvent:
    session_id: str
    event_index: int
    agent_id: str
    agent_name: str = ""
    timestamp: float | None = None
    agent_description: str | None = None
    tags: tuple[str, ...] | None = None
    span_id: str | None = None
    parent_span_id: str | None = None
    caller_index: int | None = None
    status: str = "unknown"
    latency_ms: float | None = None
    token_count: int | None = None
    cost: float | None = None
    category: str | None = None
    task_text: str | None = None
    session_query: str | None = None
    meta: Mapping = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in _EVENT_FIELDS}
        if d["tags"] is not None:
            d["tags"] = list(d["tags"])
        d = {k: v for k, v in d.items() if v is not None}
        if self.meta:
            d["meta"] = dict(self.meta)
        return d


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def _event_from_record(rec: Mapping) -> RawEvent:
    """Build a RawEvent or raise ValueError with a short reason."""
    if not isinstance(rec, Mapping):
        raise ValueError("record is not an object")
    for key in ("session_id", "agent_id"):
        if rec.get(key) in (None, ""):
            raise ValueError(f"missing {key}")
    idx = rec.get("event_index")
    if idx is None:
        raise ValueError("missing event_index")
    if not isinstance(idx, int) or isinstance(idx, bool) or idx < 0:
        raise ValueError("event_index must be a non-negative integer")
    status = rec.get("status") or "unknown"
    if status not in STATUSES:
        raise ValueError(f"invalid status {status!r}")
    ts = rec.get("timestamp")
    if ts is not None and (not _is_number(ts) or ts < 0):
        raise ValueError("timestamp must be a non-negative number")
    caller = rec.get("caller_index")
    if caller is not None and (not isinstance(caller, int) or isinstance(caller, bool)):
        raise ValueError("caller_index must be an integer")
    tags = rec.get("tags")
    meta = dict(rec.get("meta") or {})
    meta.update({k: v for k, v in rec.items() if k not in _EVENT_FIELDS and k != "meta"})
    return RawEvent(
        session_id=str(rec["session_id"]),
        event_index=idx,
        agent_id=str(rec["agent_id"]),
        agent_name=rec.get("agent_name") or "",
        timestamp=ts,
        agent_description=rec.get("agent_description"),
        tags=tuple(tags) if tags is not None else None,
        span_id=rec.get("span_id"),
        parent_span_id=rec.get("parent_span_id"),
        caller_index=caller,
        status=status,
        latency_ms=rec.get("latency_ms"),
        token_count=rec.get("token_count"),
        cost=rec.get("cost"),
        category=rec.get("category"),
        task_text=rec.get("task_text"),
        session_query=rec.get("session_query"),
        meta=meta,
    )


def parse_events(
    records: Iterable[str | Mapping], errors: list[Issue] | None = None
) -> dict[str, list[RawEvent]]:
    """Group event records by session, each group sorted by ``event_index``.

    ``records`` may be JSON strings (one per line) or already-decoded dicts.
    Rejected records are reported in ``errors`` with their 1-based line number.
    """
    groups: dict[str, dict[int, RawEvent]] = defaultdict(dict)
    for lineno, rec in enumerate(records, 1):
        if isinstance(rec, str):
            if not rec.strip():
                continue
            try:
                rec = json.loads(rec)
            except json.JSONDecodeError as exc:
                _report(errors, "", "malformed_record", f"line {lineno}: invalid JSON ({exc.msg})")
                continue
        try:
            ev = _event_from_record(rec)
        except ValueError as exc:
            sid = rec.get("session_id", "") if isinstance(rec, Mapping) else ""
            _report(errors, str(sid or ""), "malformed_record", f"line {lineno}: {exc}")
            continue
        if ev.event_index in groups[ev.session_id]:
            _report(
                errors,
                ev.session_id,
                "duplicate_event",
                f"line {lineno}: duplicate event_index {ev.event_index}",
            )
            continue
        if ev.caller_index is not None and ev.caller_index >= ev.event_index:
            _report(
                errors,
                ev.session_id,
                "caller_not_prior",
                f"line {lineno}: caller_index {ev.caller_index} >= event_index {ev.event_index}",
            )
        groups[ev.session_id][ev.event_index] = ev
    return {sid: [evs[i] for i in sorted(evs)] for sid, evs in sorted(groups.items())}


def read_events(path: str | Path, errors: list[Issue] | None = None) -> dict[str, list[RawEvent]]:
    with open(path, encoding="utf-8") as fh:
        return parse_events(fh, errors)


def _report(issues: list[Issue] | None, session_id: str, rule: str, detail: str) -> None:
    if issues is not None:
        issues.append(Issue(session_id, rule, detail))
    log.debug("%s [%s] %s", session_id, rule, detail)


def resolve_parents(
    events: list[RawEvent], issues: list[Issue] | None = None
) -> dict[int, int | None]:
    """Map each event_index to its parent event_index (``None`` for the root).

    Per event, the first rule that applies wins:
    1. ``parent_span_id`` equal to the ``span_id`` of an earlier event
       (the latest such event if the span id is duplicated);
    2. ``caller_index`` naming another event of the session;
    3. last-invocation matching: the immediately preceding event.
    The first event is always the root.
    """
    if not events:
        return {}
    sid = events[0].session_id
    present = {e.event_index for e in events}
    span_owner: dict[str, int] = {}
    parents: dict[int, int | None] = {}
    prev: int | None = None
    for ev in events:
        i = ev.event_index
        if prev is None:
            parents[i] = None
            if ev.parent_span_id is not None or ev.caller_index is not None:
                _report(issues, sid, "root_link_ignored", f"event {i} is first; its links are ignored")
        else:
            parents[i] = _resolve_one(ev, span_owner, present, prev, sid, issues)
        if ev.span_id is not None:
            if ev.span_id in span_owner:
                _report(issues, sid, "duplicate_span", f"span {ev.span_id!r} reused by event {i}")
            span_owner[ev.span_id] = i
        prev = i
    return parents


def _resolve_one(ev, span_owner, present, prev, sid, issues) -> int:
    i = ev.event_index
    if ev.parent_span_id is not None:
        if ev.parent_span_id in span_owner:
            return span_owner[ev.parent_span_id]
        _report(issues, sid, "unmatched_parent_span", f"event {i}: parent_span_id {ev.parent_span_id!r} not found")
    if ev.caller_index is not None:
        if ev.caller_index in present and ev.caller_index != i:
            return ev.caller_index
        _report(issues, sid, "invalid_caller", f"event {i}: caller_index {ev.caller_index} not usable")
    return prev


def _ancestors(parents: Mapping[int, int | None], i: int) -> set[int]:
    out: set[int] = set()
    cur = parents.get(i)
    while cur is not None and cur not in out:
        out.add(cur)
        cur = parents.get(cur)
    return out


def _find_cycle(parents: Mapping[int, int | None], order: list[int]) -> list[int] | None:
    done: set[int] = set()
    for start in order:
        path: list[int] = []
        where: dict[int, int] = {}
        cur: int | None = start
        while cur is not None and cur not in done and cur not in where:
            where[cur] = len(path)
            path.append(cur)
            cur = parents.get(cur)
        if cur is not None and cur in where:
            return path[where[cur]:]
        done.update(path)
    return None


def build_tree(
    events: list[RawEvent],
    parents: Mapping[int, int | None],
    issues: list[Issue] | None = None,
) -> CallingTree:
    """Arrange one session's events into a valid calling tree.

    Corrupt links are repaired, never fatal: links that close a cycle or put
    a child before its parent in time fall back to the nearest usable earlier
    event. A synthetic orchestrator root is added only if more than one event
    is left without a parent.
    """
    if not events:
        raise ValueError("cannot build a tree from an empty session")
    sid = events[0].session_id
    order = [e.event_index for e in events]
    pos = {i: k for k, i in enumerate(order)}
    ts = {e.event_index: e.timestamp for e in events}
    par: dict[int, int | None] = {}
    for i in order:
        p = parents.get(i)
        if p is not None and p not in pos:
            _report(issues, sid, "dangling_parent", f"event {i}: parent {p} not in session")
            p = order[pos[i] - 1] if pos[i] > 0 else None
        par[i] = p

    # break cycles by rerouting their forward (corrupt) links to the preceding event
    while (cycle := _find_cycle(par, order)) is not None:
        for c in cycle:
            p = par[c]
            if p is not None and pos[p] > pos[c]:
                fallback = order[pos[c] - 1] if pos[c] > 0 else None
                _report(issues, sid, "cycle_broken", f"event {c}: dropped link to {p}, reparented to {fallback}")
                par[c] = fallback

    for i in order:
        p = par[i]
        if p is None or ts[p] is None or ts[i] is None or ts[p] <= ts[i]:
            continue
        below = {j for j in order if i in _ancestors(par, j)}
        candidates = [
            j for j in reversed(order[: pos[i]])
            if j not in below and (ts[j] is None or ts[j] <= ts[i])
        ]
        par[i] = candidates[0] if candidates else None
        _report(issues, sid, "timestamp_inversion", f"event {i}: parent {p} is later; reparented to {par[i]}")

    query = next((e.session_query for e in events if e.session_query), "")
    nodes = [
        CallNode(
            node_id=f"n{e.event_index}",
            agent_id=e.agent_id,
            task_text=e.task_text or "",
            timestamp=e.timestamp,
            status=e.status,
            parent=None if par[e.event_index] is None else f"n{par[e.event_index]}",
            latency_ms=e.latency_ms,
            token_count=e.token_count,
        )
        for e in events
    ]
    orphans = [n for n in nodes if n.parent is None]
    if len(orphans) > 1:
        _report(issues, sid, "synthetic_root", f"{len(orphans)} parentless events; orchestrator root added")
        root = CallNode(node_id=SYNTHETIC_ROOT_ID, agent_id=ORCHESTRATOR_ID)
        nodes = [root] + [
            n if n.parent is not None else replace(n, parent=SYNTHETIC_ROOT_ID)
            for n in nodes
        ]
    return CallingTree(session_id=sid, session_query=query, nodes=tuple(nodes))


def build_agent_pool(
    trees: Iterable[CallingTree],
    events: Mapping[str, list[RawEvent]] | None = None,
    issues: list[Issue] | None = None,
) -> list[AgentRecord]:
    """One record per distinct agent id, sorted by id.

    Metadata comes from the first event (in session_id, event_index order)
    that carries each field; conflicting later descriptions are reported.
    """
    invocations: Counter[str] = Counter()
    successes: Counter[str] = Counter()
    for tree in trees:
        for node in tree.nodes:
            invocations[node.agent_id] += 1
            successes[node.agent_id] += node.status == "success"

    meta: dict[str, dict] = defaultdict(dict)
    for sid in sorted(events or {}):
        for ev in events[sid]:
            m = meta[ev.agent_id]
            if ev.agent_name and "name" not in m:
                m["name"] = ev.agent_name
            if ev.agent_description:
                if "description" not in m:
                    m["description"] = ev.agent_description
                elif ev.agent_description != m["description"]:
                    _report(issues, sid, "conflicting_description", f"agent {ev.agent_id} at event {ev.event_index}")
            if ev.tags and "tags" not in m:
                m["tags"] = tuple(ev.tags)
            if ev.category and "category" not in m:
                m["category"] = ev.category
    meta[ORCHESTRATOR_ID].setdefault("name", "orchestrator")

    return [
        AgentRecord(
            id=aid,
            name=meta[aid].get("name", aid),
            description=meta[aid].get("description", ""),
            tags=meta[aid].get("tags", ()),
            category=meta[aid].get("category"),
            invocation_count=invocations[aid],
            success_count=successes[aid],
        )
        for aid in sorted(invocations)
    ]


def prune_degenerate(
    trees: Iterable[CallingTree], enabled: bool = True, issues: list[Issue] | None = None
) -> tuple[list[CallingTree], int]:
    """Drop trees with at most one non-root node when ``enabled``."""
    trees = list(trees)
    if not enabled:
        return trees, 0
    kept = [t for t in trees if len(t.nodes) - 1 > 1]
    pruned = len(trees) - len(kept)
    if trees and not kept:
        log.warning("pruning removed every tree; corpus is empty")
        _report(issues, "", "empty_after_pruning", f"all {pruned} trees were single-call")
    return kept, pruned


@dataclass(frozen=True)
class CorpusStats:
    tool_count: int
    graph_count: int
    node_count: int
    avg_calls_per_tool: float
    avg_nodes_per_graph: float
    degenerate: bool = False

    @classmethod
    def from_counts(cls, tool_count: int, graph_count: int, node_count: int) -> CorpusStats:
        degenerate = tool_count == 0 or graph_count == 0
        return cls(
            tool_count=tool_count,
            graph_count=graph_count,
            node_count=node_count,
            avg_calls_per_tool=node_count / tool_count if tool_count else 0.0,
            avg_nodes_per_graph=node_count / graph_count if graph_count else 0.0,
            degenerate=degenerate,
        )

    def rounded(self, digits: int = 2) -> tuple[float, float]:
        return round(self.avg_calls_per_tool, digits), round(self.avg_nodes_per_graph, digits)

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_stats(pool: Iterable[AgentRecord], trees: Iterable[CallingTree]) -> CorpusStats:
    trees = list(trees)
    return CorpusStats.from_counts(
        tool_count=len(list(pool)),
        graph_count=len(trees),
        node_count=sum(len(t.nodes) for t in trees),
    )


def stats_from_events(sessions: Mapping[str, list[RawEvent]]) -> CorpusStats:
    """Corpus statistics computed straight from parsed events."""
    agents = {e.agent_id for evs in sessions.values() for e in evs}
    return CorpusStats.from_counts(
        tool_count=len(agents),
        graph_count=len(sessions),
        node_count=sum(len(evs) for evs in sessions.values()),
    )


@dataclass
class IngestResult:
    trees: list[CallingTree]
    pool: list[AgentRecord]
    issues: list[Issue]
    pruned: int
    stats: CorpusStats


def ingest(records: Iterable[str | Mapping], prune: bool = False) -> IngestResult:
    """Run the whole normalisation pipeline over event records."""
    issues: list[Issue] = []
    sessions = parse_events(records, issues)
    trees = []
    for sid, events in sessions.items():
        parents = resolve_parents(events, issues)
        trees.append(build_tree(events, parents, issues))
    trees, pruned = prune_degenerate(trees, enabled=prune, issues=issues)
    kept = {t.session_id for t in trees}
    pool = build_agent_pool(trees, {s: e for s, e in sessions.items() if s in kept}, issues)
    return IngestResult(trees, pool, issues, pruned, corpus_stats(pool, trees))


def save_corpus(path: str | Path, trees: Iterable[CallingTree], pool: Iterable[AgentRecord]) -> None:
    doc = {
        "version": CORPUS_VERSION,
        "sessions": [t.to_dict() for t in trees],
        "agents": [a.to_dict() for a in pool],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_corpus(path: str | Path) -> tuple[list[CallingTree], list[AgentRecord]]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != CORPUS_VERSION:
        raise ValueError(f"unsupported corpus version: {doc.get('version')!r}")
    trees = [CallingTree.from_dict(s) for s in doc["sessions"]]
    pool = [AgentRecord.from_dict(a) for a in doc["agents"]]
    return trees, pool


def write_issues(path: str | Path, issues: Iterable[Issue]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for issue in issues:
            fh.write(json.dumps(issue.to_dict(), sort_keys=True) + "\n")
