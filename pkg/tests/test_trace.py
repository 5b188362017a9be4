import pytest
from hypothesis import given
from hypothesis import strategies as st

from agentrec.trace import (
    AgentRecord,
    CallingTree,
    CallNode,
    build_agent_network,
    extract_agent_instances,
    extract_system_instances,
    validate_tree,
)
from helpers import chain, tree_of


def pool_for(*ids):
    return [AgentRecord(id=i, name=i) for i in ids]


class TestValidateTree:
    def test_well_formed_chain(self):
        assert validate_tree(chain(3)) == []

    def test_multiple_roots(self):
        tree = tree_of({"a": None, "b": None})
        assert validate_tree(tree) == ["multiple roots: a, b"]

    def test_dangling_parent_names_the_node(self):
        tree = tree_of({"root": None, "n3": "ghost"})
        assert validate_tree(tree) == ["dangling parent: n3"]

    def test_timestamp_inversion(self):
        tree = tree_of({"r": None, "c": "r"}, times={"r": 5.0, "c": 1.0})
        assert validate_tree(tree) == ["timestamp inversion: c"]

    def test_missing_timestamps_are_not_inversions(self):
        nodes = (CallNode("r", "x"), CallNode("c", "y", parent="r", timestamp=1.0))
        assert validate_tree(CallingTree("s", "q", nodes)) == []

    def test_cycle_and_no_root(self):
        tree = tree_of({"a": "b", "b": "a"})
        problems = validate_tree(tree)
        assert "no root" in problems
        assert any(p.startswith("cycle:") for p in problems)

    def test_detached_cycle_beside_a_root(self):
        tree = tree_of({"r": None, "a": "b", "b": "a"}, times={"r": 0, "a": 1, "b": 1})
        assert {"cycle: a", "cycle: b"} <= set(validate_tree(tree))

    def test_duplicate_ids_and_bad_status(self):
        nodes = (CallNode("r", "x"), CallNode("r", "y", parent=None), CallNode("c", "z", parent="r", status="odd"))
        problems = validate_tree(CallingTree("s", "q", nodes))
        assert "duplicate node_id: r" in problems
        assert "bad status: c" in problems

    def test_empty(self):
        assert validate_tree(CallingTree("s", "q", ())) == ["empty tree"]


class TestTree:
    def test_children_ordered_by_timestamp_then_natural_id(self):
        tree = tree_of(
            {"r": None, "n10": "r", "n2": "r", "late": "r"},
            times={"r": 0, "n10": 1, "n2": 1, "late": 0.5},
        )
        assert [c.node_id for c in tree.children["r"]] == ["late", "n2", "n10"]

    def test_round_trip(self):
        tree = chain(4)
        assert CallingTree.from_dict(tree.to_dict()) == tree

    def test_ancestors_and_depth(self):
        tree = chain(4)
        assert [a.node_id for a in tree.ancestors("n3")] == ["n2", "n1", "n0"]
        assert tree.depth_of("n3") == 3


class TestAgentRecord:
    def test_counts_invariant(self):
        with pytest.raises(ValueError):
            AgentRecord(id="a", name="a", invocation_count=1, success_count=2)

    def test_text_joins_fields(self):
        a = AgentRecord(id="a", name="search", description="web search", tags=("web", "fast"))
        assert a.text == "search web search web fast"


class TestAgentNetwork:
    def test_single_edge(self):
        tree = tree_of({"r": None, "c": "r"}, agents={"r": "A", "c": "B"})
        assert build_agent_network([tree], pool_for("A", "B")).edges == {("A", "B"): 1}

    def test_empty_tree_list(self):
        net = build_agent_network([], pool_for("A"))
        assert net.edges == {} and [a.id for a in net.agents] == ["A"]

    def test_counts_aggregate_across_trees(self):
        # two trees, each with A->B; the second also has B->C
        t1 = tree_of({"r": None, "c": "r"}, agents={"r": "A", "c": "B"}, sid="1")
        t2 = tree_of({"r": None, "c": "r", "d": "c"}, agents={"r": "A", "c": "B", "d": "C"}, sid="2")
        net = build_agent_network([t1, t2], pool_for("A", "B", "C"))
        assert net.edges == {("A", "B"): 2, ("B", "C"): 1}
        assert net.neighbors("B") == {"C": 1}

    def test_unknown_agent(self):
        tree = tree_of({"r": None, "c": "r"}, agents={"r": "A", "c": "Z"})
        with pytest.raises(KeyError, match="Z"):
            build_agent_network([tree], pool_for("A"))


class TestInstances:
    def test_root_with_two_children(self):
        tree = tree_of({"r": None, "a": "r", "b": "r"})
        assert len(extract_agent_instances([tree])) == 2

    def test_chain_context_count(self):
        inst = extract_agent_instances([tree_of({"r": None, "A": "r", "B": "A"})])
        assert inst[-1].gold_id == "B" and inst[-1].context_node_count == 2

    def test_fixture_instances(self, mini_result):
        inst = extract_agent_instances(mini_result.trees, mini_result.pool)
        assert [(i.instance_id, i.gold_id, i.query) for i in inst] == [
            ("s1/n1", "search", "search flights to paris"),
            ("s1/n2", "compare", "compare fares"),
            ("s1/n3", "book", "find cheap flights to paris | step 3: after compare"),
            ("s2/n1", "fetch", "fetch report"),
            ("s2/n2", "summarise", "summarise report"),
            ("s3/n1", "translate", "translate query to french"),
            ("s3/n2", "search", "search french sites"),
        ]

    def test_fallback_uses_parent_name(self):
        tree = tree_of({"r": None, "c": "r"}, agents={"r": "boss", "c": "w"}, query="plan trip")
        pool = [AgentRecord(id="boss", name="Coordinator"), AgentRecord(id="w", name="w")]
        assert extract_agent_instances([tree], pool)[0].query == "plan trip | step 1: after Coordinator"

    def test_system_instances(self, mini_result):
        inst = extract_system_instances(mini_result.trees)
        assert {i.gold_id for i in inst} == {t.session_id for t in mini_result.trees}
        assert all(i.context_node_count == 0 and i.kind == "system" for i in inst)

    def test_empty_session_query_skipped(self):
        trees = [tree_of({"r": None}, sid=s, query=q) for s, q in (("a", "x"), ("b", ""), ("c", "y"))]
        skipped = []
        inst = extract_system_instances(trees, skipped)
        assert len(inst) == 2 and len(skipped) == 1 and skipped[0]["session_id"] == "b"


@st.composite
def random_trees(draw):
    trees = []
    for t in range(draw(st.integers(1, 4))):
        n = draw(st.integers(1, 8))
        parents = {"n0": None}
        for i in range(1, n):
            parents[f"n{i}"] = f"n{draw(st.integers(0, i - 1))}"
        agents = {k: f"A{draw(st.integers(0, 3))}" for k in parents}
        trees.append(tree_of(parents, agents=agents, sid=f"s{t}"))
    return trees


@given(random_trees())
def test_instance_and_edge_totals(trees):
    pool = pool_for("A0", "A1", "A2", "A3")
    total_nodes = sum(len(t.nodes) for t in trees)
    assert len(extract_agent_instances(trees)) == total_nodes - len(trees)
    assert sum(build_agent_network(trees, pool).edges.values()) == total_nodes - len(trees)
    assert all(validate_tree(t) == [] for t in trees)
