import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agentrec.corpus import Corpus
from agentrec.encoder import Encoder, cosine
from agentrec.features import fit_normalizer
from agentrec.pipeline import recommend, rerank, retrieve, retrieve_agents, retrieve_systems
from agentrec.ranker import Model, score
from agentrec.trace import AgentRecord
from helpers import tree_of

WORDS = ["web", "search", "map", "route", "weather", "news", "price", "fare"]


def brute_force(query, items, enc):
    q = enc.encode_text(query)
    sims = [(cid, cosine(q, vec)) for cid, vec in items]
    return sorted(sims, key=lambda x: (-x[1], x[0]))


@pytest.fixture(scope="module")
def five_pool():
    pool = [
        AgentRecord(id="geo", name="map", description="route planner"),
        AgentRecord(id="web", name="search", description="web search"),
        AgentRecord(id="met", name="weather", description="forecast"),
        AgentRecord(id="pr", name="price", description="fare search"),
        AgentRecord(id="nw", name="news", description="headline search"),
    ]
    trees = [tree_of({"r": None, "c": "r"}, agents={"r": a.id, "c": b.id}, sid=f"s{i}", query=f"{a.name} {b.name}")
             for i, (a, b) in enumerate(zip(pool, pool[1:] + pool[:1]))]
    return Corpus(trees, pool)


@pytest.fixture(scope="module")
def agent_model(mini_corpus):
    return Model(kind="agent", normalizer=fit_normalizer(mini_corpus.systems, mini_corpus.pool))


@pytest.fixture(scope="module")
def system_model(mini_corpus):
    return Model(kind="system", normalizer=fit_normalizer(mini_corpus.systems))


class TestRetrieve:
    def test_full_pool(self, five_pool):
        out = retrieve_agents("web search", five_pool, k=5)
        assert sorted(cid for cid, _ in out) == sorted(five_pool.agent_ids)
        assert [s for _, s in out] == sorted((s for _, s in out), reverse=True)

    def test_exact_text_first(self, five_pool):
        (cid, sim), *_ = retrieve_agents(five_pool.agents["met"].text, five_pool, 2)
        assert cid == "met" and sim == pytest.approx(1.0)

    def test_matches_exhaustive_sort(self, five_pool):
        enc = Encoder()
        items = [(a.id, enc.encode_agent(a)) for a in five_pool.pool]
        assert retrieve_agents("search for fare prices", five_pool, 2) == brute_force("search for fare prices", items, enc)[:2]

    def test_k_larger_than_pool(self, five_pool):
        assert len(retrieve_agents("x", five_pool, 50)) == 5

    def test_k_must_be_positive(self, five_pool):
        with pytest.raises(ValueError):
            retrieve_agents("x", five_pool, 0)

    def test_systems_exact_serialization(self, mini_corpus):
        s = mini_corpus.systems_by_id["s3"]
        (cid, sim), *_ = retrieve_systems(s.serialized, mini_corpus, 1)
        assert cid == "s3" and sim == pytest.approx(1.0)

    def test_systems_all_and_exhaustive(self, mini_corpus):
        enc = mini_corpus.encoder
        items = [(s.id, enc.encode_graph(s.graph, mini_corpus.agents)) for s in mini_corpus.systems]
        out = retrieve_systems("search the web", mini_corpus, 10)
        assert out == brute_force("search the web", items, enc)


class TestRerank:
    def test_empty(self, agent_model, mini_corpus):
        with pytest.raises(ValueError, match="empty feasible set"):
            rerank(agent_model, "q", [], mini_corpus)

    def test_single_candidate(self, agent_model, mini_corpus):
        rec = rerank(agent_model, "q", [("book", 0.0)], mini_corpus)
        assert rec.chosen == "book" and rec.k_used == 1

    def test_rel_only_model_keeps_stage1_order(self, mini_corpus):
        model = Model(kind="agent", w=(1, 0, 0, 0))
        stage1 = retrieve_agents("search report", mini_corpus, 7)
        assert rerank(model, "search report", stage1, mini_corpus).ranking == [cid for cid, _ in stage1]

    def test_ties_go_to_smallest_id(self, mini_corpus):
        model = Model(kind="agent", w=(0, 0, 0, 0))
        rec = rerank(model, "q", [("search", 0.9), ("compare", 0.1), ("fetch", 0.5)], mini_corpus)
        assert rec.chosen == "compare"

    def test_similarities_preserved(self, agent_model, mini_corpus):
        stage1 = retrieve_agents("fetch the report", mini_corpus, 3)
        rec = rerank(agent_model, "fetch the report", stage1, mini_corpus)
        assert {cid: sim for cid, sim, _ in rec.candidates} == dict(stage1)


class TestRecommend:
    def test_direct_equals_full_shortlist(self, agent_model, mini_corpus):
        for q in ("search flights", "summarise", "translate to french", "book"):
            a = recommend(agent_model, q, mini_corpus, "direct")
            b = recommend(agent_model, q, mini_corpus, "two_stage", k=len(mini_corpus.pool))
            assert a.chosen == b.chosen and a.stage == "direct" and b.stage == "two_stage"

    def test_bottleneck(self, mini_corpus):
        model = Model(kind="agent", w=(0, 0, 0, 0))
        stage1 = [cid for cid, _ in retrieve_agents("compare fares", mini_corpus, 1)]
        assert "book" not in stage1
        assert recommend(model, "compare fares", mini_corpus, k=1).chosen != "book"

    def test_hand_trace_k3(self, agent_model, mini_corpus):
        query = "search french sites"
        stage1 = retrieve_agents(query, mini_corpus, 3)
        scored = sorted(
            ((cid, score(agent_model, query, mini_corpus.agents[cid], mini_corpus)) for cid, _ in stage1),
            key=lambda x: (-x[1], x[0]),
        )
        rec = recommend(agent_model, query, mini_corpus, k=3)
        assert rec.ranking == [cid for cid, _ in scored]
        assert [c[2] for c in rec.candidates] == pytest.approx([s for _, s in scored])

    def test_systems(self, system_model, mini_corpus):
        rec = recommend(system_model, "summarise the quarterly report", mini_corpus, k=2)
        assert rec.k_used == 2 and rec.stage == "two_stage"
        rel_only = Model(kind="system", w=(1, 0, 0, 0), normalizer=system_model.normalizer)
        assert recommend(rel_only, "summarise the quarterly report", mini_corpus, k=2).chosen == "s2"

    def test_unknown_mode(self, agent_model, mini_corpus):
        with pytest.raises(ValueError):
            recommend(agent_model, "q", mini_corpus, "exhaustive")

    def test_json(self, agent_model, mini_corpus):
        doc = json.loads(recommend(agent_model, "fetch report", mini_corpus, k=2).to_json())
        assert set(doc) == {"query", "chosen", "k_used", "stage", "candidates"}
        assert set(doc["candidates"][0]) == {"id", "stage1_similarity", "stage2_score"}

    def test_deterministic(self, agent_model, mini_corpus):
        assert recommend(agent_model, "web", mini_corpus) == recommend(agent_model, "web", mini_corpus)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.sampled_from(WORDS), min_size=1, max_size=5), st.integers(1, 4))
def test_monotone_feasibility(words, k):
    pool = [AgentRecord(id=w, name=w, description=" ".join(WORDS[i:i + 2])) for i, w in enumerate(WORDS)]
    corpus = Corpus([tree_of({"r": None}, agents={"r": WORDS[0]})], pool)
    query = " ".join(words)
    small = retrieve(query, corpus, "agent", k)
    big = retrieve(query, corpus, "agent", k + 1)
    assert {c for c, _ in small} <= {c for c, _ in big}
    sims = [s for _, s in big]
    assert all(0.0 <= s <= 1.0 for s in sims) and sims == sorted(sims, reverse=True)
