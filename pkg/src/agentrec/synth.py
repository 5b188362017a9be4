"""Seeded synthetic event logs for tests and demos.

With ``planted=True`` every worker agent owns a few signature words whose hash
buckets are disjoint from every other word the generator emits. Node task texts
and session queries are built from the signature words of the agents they
describe, so under the built-in encoder the gold agent is the only pool member
with non-zero relevance to its query.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path

from agentrec.encoder import DEFAULT_DIM, bucket

ORCHESTRATOR = "orchestrator"
_SYLLABLES = [c + v for c in "bdfgklmnprstvz" for v in "aeiou"]
_SHARED = ("handles", "and", "requests", "routes", "user", "orchestrator")
_CATEGORIES = ("retrieval", "compute", "storage", "planning")


@dataclass(frozen=True)
class SynthConfig:
    n_agents: int = 10
    n_sessions: int = 20
    depths: tuple[int, ...] = (1, 2, 3)
    max_extra_children: int = 1
    planted: bool = True
    signature_words: int = 2
    filler_words: int = 6
    dim: int = DEFAULT_DIM

    def __post_init__(self) -> None:
        if self.n_agents < 1 or self.n_sessions < 1:
            raise ValueError("n_agents and n_sessions must be positive")
        if not self.depths or min(self.depths) < 1:
            raise ValueError("depths must be a non-empty list of integers >= 1")
        object.__setattr__(self, "depths", tuple(self.depths))


def _words(rng: random.Random, n: int, dim: int, taken_buckets: set[int], distinct_buckets: bool) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * (n + 10):
            raise ValueError(f"cannot find {n} words with free hash buckets in dimension {dim}")
        word = "".join(rng.choice(_SYLLABLES) for _ in range(rng.randint(2, 3)))
        if word in seen or word in _SHARED or word in _CATEGORIES:
            continue
        b = bucket(word, dim)
        if distinct_buckets and b in taken_buckets:
            continue
        seen.add(word)
        taken_buckets.add(b)
        out.append(word)
    return out


def _shape(rng: random.Random, cfg: SynthConfig) -> list[int | None]:
    """Parent index per node in preorder; node 0 is the orchestrator root."""
    depth = rng.choice(cfg.depths)
    children: dict[int, list[int]] = {0: []}
    level = {0: 0}
    nodes = 1
    spine_parent = 0
    for d in range(1, depth + 1):
        children[spine_parent].append(nodes)
        children[nodes] = []
        level[nodes] = d
        spine_parent = nodes
        nodes += 1
    for node in range(1, nodes):
        if level[node] >= depth:
            continue
        for _ in range(rng.randint(0, cfg.max_extra_children)):
            children[node].append(nodes)
            children[nodes] = []
            level[nodes] = level[node] + 1
            nodes += 1
    order: list[int] = []
    stack = [0]
    while stack:
        n = stack.pop()
        order.append(n)
        stack.extend(reversed(children[n]))
    position = {n: i for i, n in enumerate(order)}
    parent_of = {c: p for p, kids in children.items() for c in kids}
    return [None if n == 0 else position[parent_of[n]] for n in order]


def synth_corpus(seed: int, config: SynthConfig = SynthConfig()) -> tuple[list[dict], dict]:
    """Generate ``(event records, ground-truth manifest)``; identical for identical inputs."""
    rng = random.Random(seed)
    cfg = config
    taken = {bucket(w, cfg.dim) for w in _SHARED + _CATEGORIES}
    distinct = cfg.planted
    signatures = [
        _words(rng, cfg.signature_words, cfg.dim, taken, distinct) for _ in range(cfg.n_agents)
    ]
    fillers = _words(rng, cfg.filler_words, cfg.dim, taken, distinct)

    agents = []
    for i, sig in enumerate(signatures):
        agents.append(
            {
                "id": f"agent_{i:03d}",
                "name": "-".join(sig),
                "description": " ".join(sig),
                "category": _CATEGORIES[i % len(_CATEGORIES)],
                "reliability": 0.9 if cfg.planted else round(rng.uniform(0.3, 0.9), 3),
            }
        )

    events: list[dict] = []
    sessions = []
    seen_teams: set[tuple[str, ...]] = set()
    for s in range(cfg.n_sessions):
        sid = f"s{s:04d}"
        for _ in range(50):
            parents = _shape(rng, cfg)
            if cfg.planted and len(parents) - 1 <= cfg.n_agents:
                picks = rng.sample(range(cfg.n_agents), len(parents) - 1)
            else:
                picks = [rng.randrange(cfg.n_agents) for _ in parents[1:]]
            team = tuple(sorted(agents[p]["id"] for p in picks))
            if not cfg.planted or team not in seen_teams:
                break
        seen_teams.add(team)

        if cfg.planted:
            query_words = [w for p in picks for w in signatures[p]] + [rng.choice(fillers)]
        else:
            query_words = rng.sample(fillers, min(3, len(fillers)))
        session_query = " ".join(query_words)

        t = round(100.0 * s, 3)
        for idx, parent in enumerate(parents):
            t = round(t + rng.uniform(0.1, 2.0), 3)
            rec: dict = {"session_id": sid, "event_index": idx, "timestamp": t, "span_id": f"{sid}-{idx}"}
            if idx == 0:
                rec.update(
                    agent_id=ORCHESTRATOR,
                    agent_name=ORCHESTRATOR,
                    agent_description="routes user requests",
                    status="success",
                    session_query=session_query,
                )
            else:
                agent = agents[picks[idx - 1]]
                sig = signatures[picks[idx - 1]]
                if cfg.planted:
                    task = " ".join(sig + [rng.choice(fillers)])
                else:
                    task = " ".join(rng.sample(fillers, 2))
                rec.update(
                    agent_id=agent["id"],
                    agent_name=agent["name"],
                    agent_description=agent["description"],
                    tags=[agent["category"]],
                    category=agent["category"],
                    task_text=task,
                    status="success" if rng.random() < agent["reliability"] else "failure",
                    latency_ms=rng.randint(20, 2000),
                    token_count=rng.randint(50, 800),
                )
                style = rng.choice(("span", "caller", "implicit"))
                if style == "implicit" and parent != idx - 1:
                    style = "caller"
                if style == "span":
                    rec["parent_span_id"] = f"{sid}-{parent}"
                elif style == "caller":
                    rec["caller_index"] = parent
            events.append(rec)
        sessions.append(
            {
                "session_id": sid,
                "agents": [agents[p]["id"] for p in picks],
                "parents": parents,
                "query": session_query,
            }
        )

    manifest = {
        "seed": seed,
        "config": asdict(cfg),
        "agents": [{**a, "signature": sig} for a, sig in zip(agents, signatures)],
        "fillers": fillers,
        "sessions": sessions,
    }
    return events, manifest


def events_to_jsonl(events: list[dict]) -> str:
    return "".join(json.dumps(e, sort_keys=True) + "\n" for e in events)


def write_synth(events: list[dict], manifest: dict, events_path: str | Path, manifest_path: str | Path | None = None) -> None:
    Path(events_path).write_text(events_to_jsonl(events), encoding="utf-8")
    if manifest_path is not None:
        Path(manifest_path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
