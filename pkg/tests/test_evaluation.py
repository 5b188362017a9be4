import csv
import io
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentrec.evaluation import (
    EvalConfig,
    TokenCostParams,
    better,
    corpus_instances,
    evaluate,
    retrieval_success_rate,
    split_dataset,
    token_cost,
    top_k_accuracy,
    train_model,
)
from agentrec.features import fit_normalizer
from agentrec.pipeline import retrieve
from agentrec.ranker import Model, TrainConfig
from agentrec.trace import DecisionInstance
from helpers import planted_corpus


def inst(i, query="q", gold="g", kind="agent"):
    return DecisionInstance(instance_id=f"i{i}", query=query, kind=kind, gold_id=gold)


@pytest.fixture(scope="module")
def planted():
    return planted_corpus(seed=2, n_agents=30, n_sessions=60)


class TestSplit:
    def test_sizes_and_determinism(self):
        items = [inst(i) for i in range(10)]
        train, test = split_dataset(items, 0.8, seed=1)
        assert len(train) + len(test) == 10 and 5 <= len(train) <= 10
        assert split_dataset(items, 0.8, seed=1) == (train, test)

    def test_partition(self):
        items = [inst(i) for i in range(200)]
        train, test = split_dataset(items, 0.8, seed=3)
        ids_train, ids_test = {x.instance_id for x in train}, {x.instance_id for x in test}
        assert not ids_train & ids_test and ids_train | ids_test == {x.instance_id for x in items}
        assert 140 <= len(train) <= 180

    def test_seed_changes_split(self):
        items = [inst(i) for i in range(50)]
        assert split_dataset(items, 0.5, 0) != split_dataset(items, 0.5, 1)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_bounds(self, fraction):
        with pytest.raises(ValueError):
            split_dataset([inst(0), inst(1)], fraction)

    def test_too_few(self):
        with pytest.raises(ValueError):
            split_dataset([inst(0)])


class TestRetrievalSuccess:
    def test_three_of_four(self, mini_corpus):
        items = [
            inst(0, "search flights", "search"),
            inst(1, "fetch report", "fetch"),
            inst(2, "summarise report", "summarise"),
            inst(3, "search flights", "book"),
        ]
        assert retrieval_success_rate(items, 1, mini_corpus) == 0.75

    def test_full_pool(self, mini_corpus):
        items = corpus_instances(mini_corpus, "agent")
        assert retrieval_success_rate(items, len(mini_corpus.pool), mini_corpus) == 1.0

    def test_exhaustive_check_k2(self, mini_corpus):
        items = corpus_instances(mini_corpus, "agent")
        hits = 0
        for x in items:
            sims = sorted(
                ((a.id, float(mini_corpus.encoder.encode_text(x.query) @ mini_corpus.encoder.encode_agent(a))) for a in mini_corpus.pool),
                key=lambda t: (-t[1], t[0]),
            )
            hits += x.gold_id in {cid for cid, _ in sims[:2]}
        assert retrieval_success_rate(items, 2, mini_corpus) == hits / len(items)


class TestTopK:
    def test_k_equal_slate_size_is_sr(self, mini_corpus):
        items = corpus_instances(mini_corpus, "agent")
        model = Model(kind="agent", normalizer=fit_normalizer(mini_corpus.systems, mini_corpus.pool))
        acc = top_k_accuracy(items, model, 3, [1, 3], mini_corpus)
        assert acc[3] == retrieval_success_rate(items, 3, mini_corpus)
        assert acc[1] <= acc[3]

    def test_perfect_model_reaches_sr(self, planted):
        items = corpus_instances(planted, "agent")
        model = Model(kind="agent", w=(1, 0, 0, 0))
        assert top_k_accuracy(items, model, 5, [1], planted)[1] == retrieval_success_rate(items, 5, planted) == 1.0

    def test_empty(self, mini_corpus):
        with pytest.raises(ValueError, match="empty eval set"):
            top_k_accuracy([], Model(kind="agent"), 3, [1], mini_corpus)


class TestTokenCost:
    def test_seal_tools_direct(self):
        assert token_cost(TokenCostParams(N=10453, L=100), "direct") == 1_045_300

    def test_expected_mode(self):
        assert token_cost(TokenCostParams(N=10453.22, L=100), "direct", expected=True) == 1_045_322.0

    def test_integer_mode_rejects_fractions(self):
        with pytest.raises(ValueError, match="expected mode"):
            token_cost(TokenCostParams(N=10453.22, L=100), "direct")

    @pytest.mark.parametrize("variant", ["ctx", "item", "direct", "two_stage", "direct_graph", "two_stage_graph"])
    def test_all_zero(self, variant):
        params = TokenCostParams(N=0, K=0, M=0, K_g=0, L=0, s=0, L_s=0, ctx_nodes=0, L_g=0)
        assert token_cost(params, variant) == 0

    def test_two_stage_hand(self):
        assert token_cost(TokenCostParams(N=5, K=2, L=10, ctx_nodes=3, L_g=4), "two_stage") == 154

    def test_ctx_and_graph_variants(self):
        p = TokenCostParams(M=6, K_g=2, s=3, L_s=5, ctx_nodes=3, L_g=4, L=7)
        assert token_cost(p, "ctx") == 12
        assert token_cost(p, "item") == 19
        assert token_cost(p, "direct_graph") == 6 * (15 + 12)
        assert token_cost(p, "two_stage_graph") == 8 * (15 + 12)

    def test_missing_parameter(self):
        with pytest.raises(ValueError, match="needs: N"):
            token_cost(TokenCostParams(L=5), "direct")

    def test_context_needs_lg(self):
        with pytest.raises(ValueError, match="L_g"):
            token_cost(TokenCostParams(N=3, L=5, ctx_nodes=2), "direct")

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            TokenCostParams(N=2, K=3)
        with pytest.raises(ValueError):
            TokenCostParams(L=-1)
        with pytest.raises(ValueError, match="unknown variant"):
            token_cost(TokenCostParams(), "llm")


@given(st.integers(1, 10**6), st.integers(0, 10**6), st.integers(1, 500), st.integers(0, 50), st.integers(0, 50))
def test_two_stage_never_cheaper(n, k, L, ctx, lg):
    k = min(k, n)
    p = TokenCostParams(N=n, K=k, L=L, ctx_nodes=ctx, L_g=lg)
    two, direct = token_cost(p, "two_stage"), token_cost(p, "direct")
    assert two >= direct
    assert (two == direct) == (k == 0)


class TestEvaluate:
    def test_stage1_mimic(self, planted):
        model = Model(kind="agent", w=(1, 0, 0, 0))
        report = evaluate(planted, model, EvalConfig(k=10))
        _, test = split_dataset(corpus_instances(planted, "agent"), 0.8, 0)
        direct = sum(retrieve(x.query, planted, "agent", 1)[0][0] == x.gold_id for x in test) / len(test)
        assert report.top_1 == direct

    def test_perfect_scorer_full_pool(self, planted):
        report = evaluate(planted, Model(kind="agent", w=(1, 0, 0, 0)), EvalConfig(k=len(planted.pool)))
        assert report.top_1 == 1.0 == report.retrieval_sr

    def test_invariants_and_records(self, planted):
        model, _ = train_model(planted, "system", TrainConfig(epochs=5))
        report = evaluate(planted, model, EvalConfig(k=3, k_eval=(1, 2, 3)))
        assert report.top_1 <= report.top_k[2] <= report.top_k[3] <= report.retrieval_sr
        assert len(report.records) > 0
        assert {"instance_id", "gold", "chosen", "gold_stage1_rank", "gold_rerank_rank"} == set(report.records[0])

    def test_csv_round_trip(self, planted):
        report = evaluate(planted, Model(kind="agent"), EvalConfig(dataset="planted", k=5))
        rows = list(csv.DictReader(io.StringIO(report.to_csv())))
        parsed = {r["metric"]: float(r["value"]) for r in rows}
        assert parsed == json.loads(report.to_json())["metrics"]
        assert {r["dataset"] for r in rows} == {"planted"} and {r["variant"] for r in rows} == {"agent-two_stage-K5"}

    def test_deterministic_and_timestamp(self, planted):
        model = Model(kind="agent")
        a = evaluate(planted, model, EvalConfig(k=5)).to_json()
        assert a == evaluate(planted, model, EvalConfig(k=5)).to_json()
        assert "created" not in json.loads(a)
        assert "created" in evaluate(planted, model, EvalConfig(k=5, deterministic=False)).to_dict()

    def test_better_honours_orientation(self, planted):
        good = evaluate(planted, Model(kind="agent", w=(1, 0, 0, 0)), EvalConfig(k=5))
        weak = evaluate(planted, Model(kind="agent", w=(0, 0, 0, 0)), EvalConfig(k=5))
        assert weak.top_1 < good.top_1
        assert better(good, weak) is good
        flipped = [evaluate(planted, m, EvalConfig(k=5, lower_is_better=True)) for m in (Model(kind="agent", w=(1, 0, 0, 0)), Model(kind="agent", w=(0, 0, 0, 0)))]
        assert better(*flipped) is flipped[1]
        assert "lower is better" in flipped[0].summary()
