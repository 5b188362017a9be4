"""Builders shared by the test modules."""

from __future__ import annotations

import random

from agentrec.ingest import RawEvent, build_tree, resolve_parents
from agentrec.trace import CallingTree, CallNode

# criterion number -> (passed, one-line detail), filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def ev(i: int, sid: str = "s", **kw) -> RawEvent:
    kw.setdefault("agent_id", f"a{i}")
    kw.setdefault("timestamp", float(i))
    return RawEvent(session_id=sid, event_index=i, **kw)


def tree_of(parents: dict[str, str | None], agents: dict[str, str] | None = None, query: str = "q",
            sid: str = "t", times: dict[str, float] | None = None) -> CallingTree:
    """A tree from a node -> parent map; node order is insertion order."""
    agents = agents or {}
    times = times or {}
    nodes = [
        CallNode(node_id=n, agent_id=agents.get(n, n), parent=p, timestamp=times.get(n, float(k)), status="success")
        for k, (n, p) in enumerate(parents.items())
    ]
    return CallingTree(session_id=sid, session_query=query, nodes=tuple(nodes))


def chain(n: int, sid: str = "t") -> CallingTree:
    parents = {f"n{i}": (f"n{i - 1}" if i else None) for i in range(n)}
    return tree_of(parents, sid=sid)


def fuzz_session(rng: random.Random, sid: str, cycle: bool = False) -> list[dict]:
    """Random event records for one session with messy linkage.

    Span, caller and timestamp fields are each present or absent at random;
    some spans are duplicated; with ``cycle=True`` two events point at each
    other through caller_index.
    """
    n = rng.randint(3 if cycle else 1, 9)
    base = rng.uniform(0, 100)
    records = []
    for i in range(n):
        rec = {"session_id": sid, "event_index": i, "agent_id": f"ag{rng.randint(0, 6)}",
               "status": rng.choice(["success", "failure", "unknown"])}
        if i == 0:
            rec["session_query"] = f"query {sid}"
        if rng.random() < 0.7:
            rec["timestamp"] = round(base + i + rng.uniform(-2.5, 2.5), 3) if rng.random() < 0.9 else max(0.0, base - 50)
            rec["timestamp"] = max(rec["timestamp"], 0.0)
        if rng.random() < 0.6:
            rec["span_id"] = f"sp{rng.randint(0, n)}" if rng.random() < 0.2 else f"{sid}-{i}"
        if i and rng.random() < 0.4:
            rec["parent_span_id"] = f"{sid}-{rng.randint(0, n + 2)}"
        if i and rng.random() < 0.4:
            rec["caller_index"] = rng.randint(0, i - 1) if rng.random() < 0.8 else rng.randint(-2, n + 2)
        records.append(rec)
    if cycle:
        a = rng.randint(1, n - 2)
        b = rng.randint(a + 1, n - 1)
        for k, other in ((a, b), (b, a)):
            records[k].pop("parent_span_id", None)
            records[k]["caller_index"] = other
    return records


def build_one(events: list[RawEvent], issues=None) -> CallingTree:
    return build_tree(events, resolve_parents(events, issues), issues)


def planted_corpus(seed: int = 0, n_agents: int = 50, n_sessions: int = 200, **kw):
    """Corpus built from a planted-signal synthetic log."""
    from agentrec.corpus import Corpus
    from agentrec.ingest import ingest
    from agentrec.synth import SynthConfig, synth_corpus

    events, _ = synth_corpus(seed, SynthConfig(n_agents=n_agents, n_sessions=n_sessions, **kw))
    result = ingest(events)
    return Corpus(result.trees, result.pool)


def finite_difference(f, theta, h: float = 1e-5):
    import numpy as np

    grad = np.zeros_like(theta)
    for i in range(len(theta)):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (f(up) - f(down)) / (2 * h)
    return grad


def relative_error(analytic, numeric) -> float:
    """Max-norm error scaled by the larger max-norm of the two gradients."""
    import numpy as np

    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-12)
    return float(np.max(np.abs(analytic - numeric)) / scale)
