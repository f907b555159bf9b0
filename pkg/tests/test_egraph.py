import numpy as np
import pytest

from conftest import INT, make_store
from planmaker import random_plan
from qaccel.batch import batches_equal, canonical_order
from qaccel.egraph import (EGraph, Term, default_rules, dump, from_plan,
                           project_filter_swap_rule, saturate)
from qaccel.errors import NoFiniteTree, QaccelError
from qaccel.executor import execute_oracle
from qaccel.plan import (And, ColumnRef, Compare, Filter, InnerJoin, Literal,
                         Project, Scan)
from qaccel.types import BOOL


def leaf(label):
    return Term(label, None, ())


def filt(child, pred):
    return Term("Filter", None, (child, pred))


def test_single_leaf_is_one_class_one_node():
    g = EGraph()
    g.add_term(leaf("x"))
    assert g.class_count() == 1
    assert g.node_count() == 1


def test_two_filter_chain_class_count():
    # Filter(Filter(x, p1), p2): two filters + x + p1 + p2
    g = EGraph()
    g.add_term(filt(filt(leaf("x"), leaf("p1")), leaf("p2")))
    assert g.class_count() == 5
    assert g.node_count() == 5


def test_from_plan_single_scan():
    g, root = from_plan(Scan("t"))
    # the table reference is its own leaf class under the scan node
    assert g.class_count() == 2
    assert g.nodes_of(root)[0].label == "Scan"


def test_hashcons_shares_identical_subtrees():
    g = EGraph()
    a = g.add_term(filt(leaf("x"), leaf("p")))
    b = g.add_term(filt(leaf("x"), leaf("p")))
    assert g.find(a) == g.find(b)
    assert g.node_count() == 3


def test_congruence_after_union():
    g = EGraph()
    x, y = g.add_term(leaf("x")), g.add_term(leaf("y"))
    fx = g.add_enode("f", None, (x,))
    fy = g.add_enode("f", None, (y,))
    assert g.find(fx) != g.find(fy)
    g.union(x, y)
    g.rebuild()
    assert g.find(fx) == g.find(fy)


def make_two_filter_store():
    return make_store({
        "t": ([("a", INT, True), ("b", INT, True)],
              [(i, 10 * i) for i in range(1, 9)])})


def q_two_filters():
    p1 = Compare(">", ColumnRef("a"), Literal(2, INT))
    p2 = Compare("<", ColumnRef("b"), Literal(70, INT))
    return Filter(Filter(Scan("t"), p1), p2), p1, p2


def test_saturation_empty_rule_set_is_noop():
    plan, _, _ = q_two_filters()
    g, root = from_plan(plan)
    before = (g.class_count(), g.node_count())
    res = saturate(g, [], catalog=None)
    assert res.reached_fixpoint and res.iterations == 1
    assert (g.class_count(), g.node_count()) == before


def test_filter_merge_reaches_fixpoint_quickly():
    store = make_two_filter_store()
    plan, p1, p2 = q_two_filters()
    g, root = from_plan(plan)
    rules = [r for r in default_rules()
             if r.name in ("filter-merge", "filter-split")]
    res = saturate(g, rules, store.catalog)
    assert res.reached_fixpoint
    assert res.iterations <= 3
    # the root class now also holds the merged single-filter form
    merged = Filter(Scan("t"), And(p1, p2))
    g2 = EGraph()
    from qaccel.egraph import encode_plan
    labels = {n.label for n in g.nodes_of(root)}
    assert labels == {"Filter"}
    extracted = g.extract_smallest(root)
    assert extracted == merged


def test_saturation_idempotent():
    store = make_two_filter_store()
    plan, _, _ = q_two_filters()
    g, root = from_plan(plan)
    res1 = saturate(g, default_rules(), store.catalog)
    assert res1.reached_fixpoint
    n_classes, n_nodes = g.class_count(), g.node_count()
    res2 = saturate(g, default_rules(), store.catalog)
    assert res2.reached_fixpoint
    assert (g.class_count(), g.node_count()) == (n_classes, n_nodes)


def test_join_commutativity_sound():
    store = make_store({
        "t": ([("a", INT, True)], [(1,), (2,), (3,)]),
        "u": ([("k", INT, True)], [(2,), (3,), (4,)]),
    })
    plan = InnerJoin(Scan("t"), Scan("u"),
                     Compare("=", ColumnRef("a"), ColumnRef("k")))
    g, root = from_plan(plan)
    saturate(g, default_rules(), store.catalog)
    # both orders are represented in the root class
    joins = [n for n in g.nodes_of(root) if n.label == "InnerJoin"]
    child_pairs = {(g.find(n.children[0]), g.find(n.children[1]))
                   for n in joins}
    assert len(child_pairs) == 2
    # extracting any of them gives the same rows up to column order
    want = sorted((a, k) for a in (1, 2, 3) for k in (2, 3, 4) if a == k)
    for n in joins:
        sub = EGraph()
        got = execute_oracle(g.extract_smallest(root), store)
        pairs = sorted((r[got.column_index("a")], r[got.column_index("k")])
                       for r in got.to_rows())
        assert pairs == want


def test_leftjoin_on_push_matches_oracle(bench_store):
    from qaccel.plan import LeftJoin, Like
    cond = And(Compare("=", ColumnRef("c_custkey"), ColumnRef("o_custkey")),
               Like(ColumnRef("o_comment"), "%special%requests%", negated=True))
    plan = LeftJoin(Scan("customer"), Scan("orders"), cond)
    g, root = from_plan(plan)
    saturate(g, default_rules(), bench_store.catalog)
    # after saturation some node in the root class is a LeftJoin over a
    # filtered right input
    found = False
    for n in g.nodes_of(root):
        if n.label == "LeftJoin":
            right = g.find(n.children[1])
            if any(m.label == "Filter" for m in g.nodes_of(right)):
                found = True
    assert found
    a = canonical_order(execute_oracle(plan, bench_store))
    b = canonical_order(execute_oracle(g.extract_smallest(root), bench_store))
    assert batches_equal(a, b, ordered=True)


def test_extract_singleton():
    g = EGraph()
    c = g.add_term(leaf("x"))
    t = g.extract_smallest_term(c)
    assert t == leaf("x")


def test_extract_prefers_merged_filter():
    store = make_two_filter_store()
    plan, p1, p2 = q_two_filters()
    g, root = from_plan(plan)
    saturate(g, default_rules(), store.catalog)
    assert g.extract_smallest(root) == Filter(Scan("t"), And(p1, p2))


def test_extract_cycle_falls_back_to_finite_node():
    g = EGraph()
    x = g.add_term(leaf("x"))
    # a self-referential alternative: c contains both x and f(c)
    f = g.add_enode("f", None, (x,))
    g.union(f, x)
    g.rebuild()
    c = g.find(x)
    # f(c) is cyclic now; extraction must pick the finite leaf
    assert g.extract_smallest_term(c) == leaf("x")


def test_extract_pure_cycle_raises():
    g = EGraph()
    x = g.add_term(leaf("x"))
    f = g.add_enode("f", None, (x,))
    hidden = g.add_enode("g", None, (f,))
    g.union(hidden, f)
    g.rebuild()
    with pytest.raises(NoFiniteTree):
        # the class of f now only derives through itself via g(f)|f(x)?  build
        # a strict cycle instead: h -> h
        g2 = EGraph()
        a = g2.add_term(leaf("a"))
        h = g2.add_enode("h", None, (a,))
        g2.union(h, a)
        g2.rebuild()
        cls = g2.find(a)
        # remove the finite node by constructing a graph with only a cycle
        g3 = EGraph()
        seed = g3.add_term(leaf("seed"))
        loop = g3.add_enode("loop", None, (seed,))
        g3.union(loop, seed)
        g3.rebuild()
        only_cycle = g3.find(seed)
        g3._nodes[only_cycle] = [n for n in g3._nodes[only_cycle]
                                 if n.label == "loop"]
        g3.extract_smallest_term(only_cycle)


def test_soundness_random_plans(bench_store):
    rng = np.random.default_rng(77)
    rules = default_rules() + [project_filter_swap_rule()]
    for _ in range(25):
        plan = random_plan(rng, bench_store.catalog, depth=int(rng.integers(1, 4)))
        g, root = from_plan(plan)
        saturate(g, rules, bench_store.catalog, node_limit=4000, iter_limit=8)
        want = canonical_order(execute_oracle(plan, bench_store))
        got = canonical_order(execute_oracle(g.extract_smallest(root),
                                             bench_store))
        assert batches_equal(want, got, ordered=True, float_rtol=1e-9), \
            f"saturation changed results for {plan}"


def test_dump_is_textual():
    g, root = from_plan(Scan("t"))
    text = dump(g)
    assert "Scan" in text and "class" in text
