"""
Learning to pick agents and agent teams
=======================================

Generate a seeded synthetic log whose queries mention the signature words of
the agents that served them, train the two rerankers and compare them with the
retrieval stage alone.
"""

import numpy as np

from agentrec import Corpus, EvalConfig, TrainConfig, evaluate, ingest, recommend
from agentrec.evaluation import train_model
from agentrec.synth import SynthConfig, synth_corpus

events, manifest = synth_corpus(seed=0, config=SynthConfig(n_agents=50, n_sessions=100))
result = ingest(events)
corpus = Corpus(result.trees, result.pool)
print(f"{len(corpus.pool)} agents, {len(corpus.systems)} historical systems")

# train with the default schedule: lr 1e-4, batch 64, 200 epochs, shortlist of 20
for kind in ("agent", "system"):
    model, slates = train_model(corpus, kind, TrainConfig(seed=0))
    report = evaluate(corpus, model, EvalConfig(dataset="synthetic", k=20, k_eval=(1, 3, 5)))
    print(report.summary())
    print("  weights", np.round(model.w, 3), "loss", round(model.loss_curve[0], 3), "->", round(model.loss_curve[-1], 3))

# without planted words retrieval is lossy, and it caps what the reranker can reach
noisy_events, _ = synth_corpus(seed=0, config=SynthConfig(n_agents=50, n_sessions=100, planted=False))
noisy = ingest(noisy_events)
noisy = Corpus(noisy.trees, noisy.pool)
noisy_model, _ = train_model(noisy, "agent", TrainConfig(seed=0))
for k in (1, 5, 20, 50):
    r = evaluate(noisy, noisy_model, EvalConfig(k=k))
    print(f"K={k:2d}  top-1 {r.top_1:.3f}  retrieval success {r.retrieval_sr:.3f}")

system_model, _ = train_model(corpus, "system", TrainConfig(seed=0))

# recommend a team for a fresh query built from two agents' signature words
words = manifest["agents"][3]["signature"] + manifest["agents"][17]["signature"]
rec = recommend(system_model, " ".join(words), corpus, k=5)
print(rec.to_json())
print("team:", [n.agent_id for n in corpus.systems_by_id[rec.chosen].graph.preorder()])
