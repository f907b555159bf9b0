import numpy as np
import pytest

from conftest import DEC2, INT, STR, make_store
from qaccel.accelerators import (AccelContext, AcceleratorInstance,
                                 CumulativeAggregates, DomainNegation,
                                 KnownGroupBy, OrderedIndex, builtin_accelerators,
                                 load_state, measure_size, save_state)
from qaccel.adapters import OracleAdapter
from qaccel.batch import batches_equal, canonical_order
from qaccel.errors import StaleState, UnknownGroupValue
from qaccel.executor import execute_oracle
from qaccel.plan import (AggExpr, And, Between, ColumnRef, Compare, Filter,
                         GroupByAgg, LeftJoin, Like, Literal, Scan, TRUE,
                         is_not_true)
from qaccel.synth import generate_store
from qaccel.templates import Instantiation, RepInstanceBinding
from qaccel.types import BOOL, Kind


def ctx_for(store):
    return AccelContext(catalog=store.catalog, adapter=OracleAdapter(store),
                        generation=store.generation)


def rep(variables=None, alternations=None):
    return RepInstanceBinding(variables or {}, alternations or {})


def dn_inst(source, keys, aggs, **bindings):
    """aggs: list of ('sum'|'count'|'count_star', expr_or_None)"""
    kind_idx = {"sum": 0, "count": 1, "count_star": 2}
    arg_name = {"sum": "sum_arg", "count": "count_arg"}
    inst = Instantiation("domain_negation")
    inst.variables.update(bindings)
    inst.alternations["source"] = source
    inst.repetitions["keys"] = [rep({"key": k}) for k in keys]
    inst.repetitions["aggs"] = [
        rep({arg_name[f]: a} if a is not None else {},
            {"agg_kind": kind_idx[f]})
        for f, a in aggs]
    return inst


def check_equivalence(accel, inst, store, float_rtol=0.0):
    ctx = ctx_for(store)
    assert accel.validate(inst, store.catalog), "fixture must pass validation"
    state = accel.build(inst, ctx)
    got = accel.run(state, inst, None, ctx)
    want = execute_oracle(accel.fragment_plan(inst), store)
    assert batches_equal(canonical_order(got), canonical_order(want),
                         ordered=True, float_rtol=float_rtol), \
        f"accelerator output differs from the engine for {inst}"
    return state, got


# --- domain negation ----------------------------------------------------------


def orders_fixture(rows=200, seed=3):
    return generate_store(seed=seed, customers=30, orders=rows, lineitems=10)


def test_domain_negation_true_predicate_returns_totals():
    store = orders_fixture()
    inst = dn_inst(0, ["o_custkey"], [("count", ColumnRef("o_orderkey"))],
                   input=Scan("orders"), pred=TRUE)
    state, got = check_equivalence(DomainNegation(), inst, store)
    # negated side is empty, so the answer equals the precomputed totals
    totals = state["totals"]
    assert got.num_rows == totals.num_rows


def test_domain_negation_q13_filter_variant_with_nulls():
    store = orders_fixture()
    pred = Like(ColumnRef("o_comment"), "%special%requests%", negated=True)
    inst = dn_inst(0, ["o_custkey"],
                   [("count", ColumnRef("o_orderkey")), ("count_star", None)],
                   input=Scan("orders"), pred=pred)
    check_equivalence(DomainNegation(), inst, store)


def test_domain_negation_left_join_variant_q13():
    store = orders_fixture()
    cond = And(Compare("=", ColumnRef("c_custkey"), ColumnRef("o_custkey")),
               Like(ColumnRef("o_comment"), "%special%requests%", negated=True))
    inst = dn_inst(1, ["c_custkey"], [("count", ColumnRef("o_orderkey"))],
                   left=Scan("customer"), right=Scan("orders"), join_pred=cond)
    check_equivalence(DomainNegation(), inst, store)


def test_domain_negation_sum_negative_values_exact():
    rng = np.random.default_rng(17)
    n = 1000
    rows = [(int(rng.integers(0, 20)), int(rng.integers(-10**6, 10**6)),
             int(rng.integers(0, 100)))
            for _ in range(n)]
    store = make_store({
        "m": ([("g", INT, False), ("v", DEC2, True), ("w", INT, False)], rows)})
    pred = Compare(">", ColumnRef("w"), Literal(20, INT))
    inst = dn_inst(0, ["g"], [("sum", ColumnRef("v")),
                              ("count", ColumnRef("v")),
                              ("count_star", None)],
                   input=Scan("m"), pred=pred)
    check_equivalence(DomainNegation(), inst, store)


def test_domain_negation_sum_all_nulls_group_is_null():
    store = make_store({
        "m": ([("g", INT, False), ("v", INT, True)],
              [(1, None), (1, None), (1, 5), (2, None), (2, None)])})
    pred = Compare("=", ColumnRef("g"), ColumnRef("g"))  # all true
    inst = dn_inst(0, ["g"], [("sum", ColumnRef("v"))],
                   input=Scan("m"), pred=pred)
    check_equivalence(DomainNegation(), inst, store)


def test_domain_negation_partition_identity():
    # count(p True) + count(p IS NOT TRUE) == total count, per group
    store = orders_fixture()
    pred = Like(ColumnRef("o_comment"), "%special%", negated=True)
    base = Scan("orders")
    def counts(child):
        plan = GroupByAgg(child, (ColumnRef("o_custkey"),), ("o_custkey",),
                          (AggExpr("count_star", None, "n"),))
        out = execute_oracle(plan, store)
        return dict(zip(out.columns[0].tolist(), out.columns[1].tolist()))
    true_side = counts(Filter(base, pred))
    negated = counts(Filter(base, is_not_true(pred)))
    total = counts(base)
    for k, v in total.items():
        assert true_side.get(k, 0) + negated.get(k, 0) == v


def test_domain_negation_rejects_avg():
    store = orders_fixture()
    inst = dn_inst(0, ["o_custkey"], [("count", ColumnRef("o_orderkey"))],
                   input=Scan("orders"), pred=TRUE)
    inst.repetitions["aggs"][0].alternations["agg_kind"] = 3  # no such option
    assert not DomainNegation().validate(inst, store.catalog)


def test_domain_negation_validator_checks_membership():
    store = orders_fixture()
    inst = dn_inst(0, ["nosuch"], [("count_star", None)],
                   input=Scan("orders"), pred=TRUE)
    assert not DomainNegation().validate(inst, store.catalog)


# --- cumulative aggregates ------------------------------------------------------


def cdf_inst(keys, aggs, input_plan, pred):
    kind_idx = {"sum": 0, "count": 1, "avg": 2, "count_star": 3}
    arg_name = {"sum": "sum_arg", "count": "count_arg", "avg": "avg_arg"}
    inst = Instantiation("cdf")
    inst.variables["input"] = input_plan
    inst.variables["pred"] = pred
    inst.repetitions["keys"] = [rep({"key": k}) for k in keys]
    inst.repetitions["aggs"] = [
        rep({arg_name[f]: a} if a is not None else {},
            {"agg_kind": kind_idx[f]})
        for f, a in aggs]
    return inst


def shipdate_pred(lo, hi, lo_incl=True, hi_incl=True):
    from qaccel.types import date_to_days, DATE as DATE_T
    parts = []
    lo_op = ">=" if lo_incl else ">"
    hi_op = "<=" if hi_incl else "<"
    return And(Compare(lo_op, ColumnRef("l_shipdate"),
                       Literal(date_to_days(lo), DATE_T)),
               Compare(hi_op, ColumnRef("l_shipdate"),
                       Literal(date_to_days(hi), DATE_T)))


def test_cdf_empty_range():
    store = generate_store(seed=5, customers=20, orders=100, lineitems=500)
    inst = cdf_inst(["l_returnflag"],
                    [("sum", ColumnRef("l_quantity")), ("count_star", None)],
                    Scan("lineitem"), shipdate_pred("1997-01-01", "1994-01-01"))
    accel = CumulativeAggregates()
    ctx = ctx_for(store)
    state = accel.build(inst, ctx)
    got = accel.run(state, inst, None, ctx)
    assert got.num_rows == 0


def test_cdf_full_domain_equals_unfiltered():
    store = generate_store(seed=5, customers=20, orders=100, lineitems=500)
    inst = cdf_inst(["l_returnflag"],
                    [("sum", ColumnRef("l_quantity")),
                     ("count", ColumnRef("l_extendedprice")),
                     ("avg", ColumnRef("l_discount")),
                     ("count_star", None)],
                    Scan("lineitem"), shipdate_pred("1990-01-01", "2000-01-01"))
    check_equivalence(CumulativeAggregates(), inst, store, float_rtol=1e-12)


def test_cdf_random_ranges_all_inclusivities():
    store = generate_store(seed=6, customers=50, orders=500, lineitems=3000)
    rng = np.random.default_rng(99)
    accel = CumulativeAggregates()
    from qaccel.types import date_to_days
    lo_all, hi_all = date_to_days("1992-01-01"), date_to_days("1998-08-02")
    for trial in range(12):
        days = sorted(rng.integers(lo_all - 30, hi_all + 30, size=2))
        lo_incl = bool(rng.integers(0, 2))
        hi_incl = bool(rng.integers(0, 2))
        from qaccel.types import DATE as DT
        lo_op = ">=" if lo_incl else ">"
        hi_op = "<=" if hi_incl else "<"
        pred = And(Compare(lo_op, ColumnRef("l_shipdate"),
                           Literal(int(days[0]), DT)),
                   Compare(hi_op, ColumnRef("l_shipdate"),
                           Literal(int(days[1]), DT)))
        inst = cdf_inst(["l_returnflag", "l_linestatus"],
                        [("sum", ColumnRef("l_quantity")),
                         ("avg", ColumnRef("l_extendedprice")),
                         ("count_star", None)],
                        Scan("lineitem"), pred)
        check_equivalence(accel, inst, store, float_rtol=1e-12)


def test_cdf_keyless_group():
    store = generate_store(seed=5, customers=20, orders=100, lineitems=400)
    inst = cdf_inst([], [("count_star", None),
                         ("sum", ColumnRef("l_quantity"))],
                    Scan("lineitem"), shipdate_pred("1995-01-01", "1996-01-01"))
    check_equivalence(CumulativeAggregates(), inst, store)


def test_cdf_telescoping_split():
    # answer(lo,hi) == answer(lo,m) + answer(m+1,hi) for SUM/COUNT
    store = generate_store(seed=8, customers=20, orders=200, lineitems=1500)
    accel = CumulativeAggregates()
    ctx = ctx_for(store)
    from qaccel.types import date_to_days
    lo, m, hi = (date_to_days(d) for d in
                 ("1993-01-01", "1995-06-15", "1997-12-31"))
    from qaccel.types import DATE as DT

    def answer(a, b):
        pred = And(Compare(">=", ColumnRef("l_shipdate"), Literal(a, DT)),
                   Compare("<=", ColumnRef("l_shipdate"), Literal(b, DT)))
        inst = cdf_inst(["l_returnflag"],
                        [("sum", ColumnRef("l_quantity")), ("count_star", None)],
                        Scan("lineitem"), pred)
        state = accel.build(inst, ctx)
        out = accel.run(state, inst, None, ctx)
        return {out.cell(r, 0): (out.cell(r, 1), out.cell(r, 2))
                for r in range(out.num_rows)}

    whole = answer(lo, hi)
    left = answer(lo, m)
    right = answer(m + 1, hi)
    for key, (s, n) in whole.items():
        ls, ln = left.get(key, (0, 0))
        rs, rn = right.get(key, (0, 0))
        assert (ls or 0) + (rs or 0) == s
        assert ln + rn == n


# --- ordered index ---------------------------------------------------------------


def idx_inst(table, pred):
    inst = Instantiation("ordered_index")
    inst.variables["table"] = table
    inst.variables["pred"] = pred
    return inst


def test_index_point_lookup_and_absent_key():
    store = generate_store(seed=9, customers=50, orders=400, lineitems=100)
    accel = OrderedIndex()
    ctx = ctx_for(store)
    inst = idx_inst("orders", Compare("=", ColumnRef("o_orderkey"),
                                      Literal(123, INT)))
    state = accel.build(inst, ctx)
    got = accel.run(state, inst, None, ctx)
    assert got.num_rows == 1
    miss = idx_inst("orders", Compare("=", ColumnRef("o_orderkey"),
                                      Literal(10**9, INT)))
    assert accel.run(state, miss, None, ctx).num_rows == 0
    check_equivalence(accel, inst, store)


def test_index_full_domain_is_whole_table():
    store = generate_store(seed=9, customers=30, orders=250, lineitems=100)
    accel = OrderedIndex()
    ctx = ctx_for(store)
    pred = Compare(">=", ColumnRef("o_totalprice"), Literal(0, INT))
    inst = idx_inst("orders", pred)
    state = accel.build(inst, ctx)
    got = accel.run(state, inst, None, ctx)
    want = execute_oracle(Filter(Scan("orders"), pred), store)
    assert got.num_rows == want.num_rows == 250
    assert batches_equal(got, want)   # multiset equality
    # and the index output is sorted by the key
    keys = got.column("o_totalprice")[0]
    assert (np.diff(keys) >= 0).all()


def test_index_range_oracle_equivalence_randomized():
    store = generate_store(seed=10, customers=40, orders=600, lineitems=100)
    accel = OrderedIndex()
    rng = np.random.default_rng(4)
    for _ in range(10):
        lo, hi = sorted(rng.integers(80000, 5100000, size=2))
        pred = Between(ColumnRef("o_totalprice"), Literal(int(lo), INT),
                       Literal(int(hi), INT))
        inst = idx_inst("orders", pred)
        check_equivalence(accel, inst, store)


def test_index_rejects_non_sargable():
    store = generate_store(seed=9, customers=10, orders=50, lineitems=10)
    accel = OrderedIndex()
    pred = Like(ColumnRef("o_comment"), "%x%")
    assert not accel.validate(idx_inst("orders", pred), store.catalog)


# --- known group-by ----------------------------------------------------------------


def kg_inst(keys, aggs, input_plan):
    kind_idx = {"sum": 0, "count": 1, "avg": 2, "min": 3, "max": 4,
                "count_star": 5}
    arg_name = {"sum": "sum_arg", "count": "count_arg", "avg": "avg_arg",
                "min": "min_arg", "max": "max_arg"}
    inst = Instantiation("known_groupby")
    inst.variables["input"] = input_plan
    inst.repetitions["keys"] = [rep({"key": k}) for k in keys]
    inst.repetitions["aggs"] = [
        rep({arg_name[f]: a} if a is not None else {},
            {"agg_kind": kind_idx[f]})
        for f, a in aggs]
    return inst


def q1_inst():
    from qaccel.plan import Arith
    disc_price = Arith("*", ColumnRef("l_extendedprice"),
                       Arith("-", Literal(100, DEC2), ColumnRef("l_discount")))
    return kg_inst(
        ["l_returnflag", "l_linestatus"],
        [("sum", ColumnRef("l_quantity")),
         ("sum", ColumnRef("l_extendedprice")),
         ("sum", disc_price),
         ("avg", ColumnRef("l_quantity")),
         ("avg", ColumnRef("l_discount")),
         ("min", ColumnRef("l_shipdate")),
         ("max", ColumnRef("l_extendedprice")),
         ("count", ColumnRef("l_quantity")),
         ("count_star", None)],
        Scan("lineitem"))


def test_known_groupby_empty_input():
    store = generate_store(seed=12, customers=10, orders=50, lineitems=200)
    accel = KnownGroupBy()
    ctx = ctx_for(store)
    inst = q1_inst()
    state = accel.build(inst, ctx)
    from qaccel.batch import ColumnarBatch
    empty = execute_oracle(Scan("lineitem"), store).head(0)
    out = accel.run(state, inst, empty, ctx)
    assert out.num_rows == 0


def test_known_groupby_q1_battery_oracle_equal():
    store = generate_store(seed=12, customers=50, orders=500, lineitems=5000)
    accel = KnownGroupBy()
    ctx = ctx_for(store)
    inst = q1_inst()
    assert accel.validate(inst, store.catalog)
    state = accel.build(inst, ctx)
    input_batch = execute_oracle(Scan("lineitem"), store)
    got = accel.run(state, inst, input_batch, ctx)
    want = execute_oracle(accel.fragment_plan(inst), store)
    assert batches_equal(canonical_order(got), canonical_order(want),
                         ordered=True, float_rtol=1e-12)
    assert got.num_rows == 6  # 3 return flags x 2 line statuses


def test_known_groupby_unknown_value_signals_staleness():
    store = generate_store(seed=12, customers=10, orders=50, lineitems=300)
    accel = KnownGroupBy()
    ctx = ctx_for(store)
    inst = kg_inst(["l_returnflag"], [("count_star", None)], Scan("lineitem"))
    state = accel.build(inst, ctx)
    batch = execute_oracle(Scan("lineitem"), store)
    i = batch.column_index("l_returnflag")
    batch.columns[i][0] = "Z"  # a flag value the domain has never seen
    with pytest.raises(UnknownGroupValue):
        accel.run(state, inst, batch, ctx)
    # planner fallback: the bare engine still answers correctly
    want = execute_oracle(accel.fragment_plan(inst), store)
    assert want.num_rows >= 3


def test_known_groupby_validator_group_limit():
    store = generate_store(seed=12, customers=10, orders=400, lineitems=100)
    accel = KnownGroupBy(group_limit=16)
    inst = kg_inst(["o_custkey", "o_orderstatus"], [("count_star", None)],
                   Scan("orders"))
    assert not accel.validate(inst, store.catalog)  # 10 x 3 > 16


# --- sizing, persistence, staleness ---------------------------------------------


def test_measure_size_empty_state_is_overhead_only():
    empty = measure_size(None)
    assert 0 < empty < 128


def test_cdf_size_grows_linearly_in_entries():
    accel = CumulativeAggregates()
    sizes = []
    for orders in (100, 1000, 10000):
        store = generate_store(seed=13, customers=10, orders=orders,
                               lineitems=orders)
        ctx = ctx_for(store)
        inst = cdf_inst(["l_returnflag"], [("count_star", None)],
                        Scan("lineitem"), shipdate_pred("1992-01-01",
                                                        "1998-12-31"))
        state = accel.build(inst, ctx)
        sizes.append(measure_size(state))
    # slope check: x10 data within [4x, 25x] state growth
    assert 4 < sizes[2] / sizes[1] < 25
    assert sizes[1] > sizes[0]


def test_domain_negation_state_much_smaller_than_input():
    store = generate_store(seed=3, customers=1000, orders=20000, lineitems=100)
    accel = DomainNegation()
    ctx = ctx_for(store)
    inst = dn_inst(0, ["o_custkey"], [("count", ColumnRef("o_orderkey"))],
                   input=Scan("orders"), pred=TRUE)
    state = accel.build(inst, ctx)
    input_bytes = store.get("orders").payload_bytes()
    assert measure_size(state) < 0.2 * input_bytes


def test_state_file_roundtrip(tmp_path):
    store = generate_store(seed=14, customers=20, orders=100, lineitems=50)
    accel = OrderedIndex()
    ctx = ctx_for(store)
    inst = idx_inst("orders", Compare("=", ColumnRef("o_orderkey"),
                                      Literal(5, INT)))
    instance = AcceleratorInstance(
        instance_id="idx-1", accel_id=accel.accel_id,
        fixed=accel.instantiation_key(inst), sample=inst,
        state=accel.build(inst, ctx), built_generation=ctx.generation)
    instance.size_bytes = measure_size(instance.state)
    path = tmp_path / "idx1.state"
    save_state(path, instance)
    loaded = load_state(path)
    assert loaded.instance_id == "idx-1"
    assert loaded.size_bytes == instance.size_bytes
    out = accel.run(loaded.state, inst, None, ctx)
    assert out.num_rows == 1


def test_stale_state_raises_after_reload():
    store = generate_store(seed=15, customers=10, orders=80, lineitems=40)
    accel = OrderedIndex()
    ctx = ctx_for(store)
    inst = idx_inst("orders", Compare("=", ColumnRef("o_orderkey"),
                                      Literal(5, INT)))
    state = accel.build(inst, ctx)
    store.reload("orders", store.get("orders"))
    ctx2 = ctx_for(store)
    with pytest.raises(StaleState):
        accel.run(state, inst, None, ctx2)


def test_builtin_registry():
    accels = builtin_accelerators()
    assert set(accels) == {"domain_negation", "cdf", "ordered_index",
                           "known_groupby"}
    for a in accels.values():
        tpl = a.template()
        assert tpl.name == a.accel_id
