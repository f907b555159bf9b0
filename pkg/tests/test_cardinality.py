import math

import numpy as np
import pytest

from conftest import INT, make_store
from qaccel.cardinality import estimate_cardinality, input_cardinality
from qaccel.executor import execute_oracle
from qaccel.plan import (AcceleratorCall, And, ColumnRef, Compare, Filter,
                         GroupByAgg, InnerJoin, Limit, Literal, Scan)
from qaccel.synth import generate_store


def test_scan_estimate_is_row_count(bench_store):
    assert estimate_cardinality(Scan("orders"), bench_store.catalog) == \
        bench_store.catalog.table("orders").row_count


def test_equality_uses_distinct_count():
    # uniform synthetic column: the 1/distinct heuristic is exact on average
    rows = [(i, i % 20) for i in range(1000)]
    store = make_store({"t": ([("id", INT, False), ("bucket", INT, False)],
                              rows)})
    plan = Filter(Scan("t"), Compare("=", ColumnRef("bucket"),
                                    Literal(7, INT)))
    est = estimate_cardinality(plan, store.catalog)
    assert est == math.ceil(1000 / 20)
    actual = execute_oracle(plan, store).num_rows
    assert est == actual  # uniform data: heuristic lands exactly


def test_conjunction_multiplies():
    rows = [(i, i % 20, i % 5) for i in range(1000)]
    store = make_store({"t": ([("id", INT, False), ("a", INT, False),
                               ("b", INT, False)], rows)})
    plan = Filter(Scan("t"), And(Compare("=", ColumnRef("a"), Literal(3, INT)),
                                 Compare("=", ColumnRef("b"), Literal(2, INT))))
    est = estimate_cardinality(plan, store.catalog)
    assert est == math.ceil(1000 / 20 / 5)


def test_pk_fk_join_estimates_fk_side(bench_store):
    plan = InnerJoin(Scan("customer"), Scan("orders"),
                     Compare("=", ColumnRef("c_custkey"),
                             ColumnRef("o_custkey")))
    est = estimate_cardinality(plan, bench_store.catalog)
    actual = execute_oracle(plan, bench_store).num_rows
    orders = bench_store.catalog.table("orders").row_count
    # |C| x |O| / max(distinct keys) = |O| on a key-foreign-key join
    assert est == pytest.approx(orders, rel=0.05)
    assert actual == orders


def test_estimate_never_raises_on_unknowns(bench_store):
    plan = Filter(Scan("orders"), Compare("=", ColumnRef("mystery_column"),
                                          Literal(1, INT)))
    est = estimate_cardinality(plan, bench_store.catalog)
    assert est >= 1


def test_limit_and_groupby_bounds(bench_store):
    capped = Limit(Scan("orders"), 7)
    assert estimate_cardinality(capped, bench_store.catalog) == 7
    grouped = GroupByAgg(Scan("lineitem"), (ColumnRef("l_returnflag"),),
                         ("f",), ())
    est = estimate_cardinality(grouped, bench_store.catalog)
    assert est == bench_store.catalog.table("lineitem") \
        .column("l_returnflag").distinct


def test_quantile_range_estimates_track_reality():
    store = generate_store(seed=88, customers=50, orders=5000, lineitems=100)
    meta = store.catalog.table("orders").column("o_totalprice")
    qs = meta.quantiles
    for frac_idx in (2, 10, 18):
        bound = int(qs[frac_idx])  # payload space == scaled decimal
        from qaccel.types import ColumnType, Kind
        plan = Filter(Scan("orders"),
                      Compare("<=", ColumnRef("o_totalprice"),
                              Literal(bound, ColumnType(Kind.DECIMAL, 2))))
        est = estimate_cardinality(plan, store.catalog)
        actual = execute_oracle(plan, store).num_rows
        assert est == pytest.approx(actual, rel=0.25, abs=50)


def test_input_cardinality_counts_leaves(bench_store):
    plan = InnerJoin(Scan("customer"), Scan("orders"),
                     Compare("=", ColumnRef("c_custkey"),
                             ColumnRef("o_custkey")))
    want = bench_store.catalog.table("customer").row_count + \
        bench_store.catalog.table("orders").row_count
    assert input_cardinality(plan, bench_store.catalog) == want
    accel = AcceleratorCall("i", "c", ())
    assert input_cardinality(accel, bench_store.catalog,
                             accel_cards={"c": 123}) == 123
