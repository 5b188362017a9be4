"""
From event logs to calling trees
================================

Parse a small hand-written log, rebuild one calling tree per session, and look
at what the recommender will see: the agent pool, the serialized graphs and the
decision instances mined from them.
"""

from pathlib import Path

from agentrec import Corpus, ingest
from agentrec.trace import extract_agent_instances, extract_system_instances

LOG = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "mini_events.jsonl"

with open(LOG, encoding="utf-8") as fh:
    result = ingest(fh)
corpus = Corpus(result.trees, result.pool)

# every session becomes one rooted tree; repairs show up as issues
for tree in result.trees:
    shape = ", ".join(f"{n.node_id}<-{n.parent}" for n in tree.preorder())
    print(f"{tree.session_id}: {shape}")
print("issues:", [(i.session_id, i.rule) for i in result.issues])

# the agent pool carries usage counts taken from the whole log
for agent in result.pool:
    print(f"{agent.id:10s} {agent.success_count}/{agent.invocation_count} calls succeeded")

# graphs are matched against queries through their preorder text
print(corpus.systems_by_id["s1"].serialized)

# one agent decision per non-root node, one system decision per session
for inst in extract_agent_instances(result.trees, result.pool):
    print(f"agent  {inst.gold_id:10s} <- {inst.query!r}")
for inst in extract_system_instances(result.trees):
    print(f"system {inst.gold_id:10s} <- {inst.query!r}")

print(result.stats.to_dict())
