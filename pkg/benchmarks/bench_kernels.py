#!/usr/bin/env python3
"""Compare the compiled grouped-aggregation kernels against the numpy
fallback, standalone and through the fused group-by accelerator.

Run:  python benchmarks/bench_kernels.py [--rows 2000000] [--repeats 5]
"""

import argparse
import time

import numpy as np

from qaccel.kernels import backends
from qaccel.accelerators import AccelContext, KnownGroupBy
from qaccel.adapters import OracleAdapter
from qaccel.executor import execute_oracle
from qaccel.plan import ColumnRef, Scan
from qaccel.synth import generate_store
from qaccel.templates import Instantiation, RepInstanceBinding


def time_best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_raw_kernels(rows, repeats):
    rng = np.random.default_rng(0)
    n_groups = 64
    gids = np.ascontiguousarray(rng.integers(0, n_groups, rows).astype(np.int64))
    m = 6
    ivals = np.ascontiguousarray(rng.integers(0, 10**6, (m, rows)).astype(np.int64))
    fvals = np.ascontiguousarray(rng.normal(size=(m, rows)))
    valid = np.ascontiguousarray((rng.random((m, rows)) > 0.05).astype(np.uint8))
    ops = np.ascontiguousarray(np.array([0, 0, 0, 1, 2, 0], dtype=np.int32))
    print(f"\nraw kernels: {rows} rows x {m} aggregates, {n_groups} groups")
    print(f"{'backend':<10} {'int64':>12} {'float64':>12}")
    results = {}
    for name, impl in backends().items():
        ti = time_best(lambda: impl.fused_group_agg_i64(
            gids, n_groups, ivals, valid, ops), repeats)
        tf = time_best(lambda: impl.fused_group_agg_f64(
            gids, n_groups, fvals, valid, ops), repeats)
        results[name] = (ti, tf)
        print(f"{name:<10} {ti*1000:>10.1f}ms {tf*1000:>10.1f}ms")
    if len(results) == 2:
        si = results["python"][0] / results["cython"][0]
        sf = results["python"][1] / results["cython"][1]
        print(f"compiled speedup: int64 {si:.1f}x, float64 {sf:.1f}x")


def bench_fused_groupby(rows, repeats):
    import os
    store = generate_store(seed=3, customers=100, orders=1000, lineitems=rows)
    ctx = AccelContext(catalog=store.catalog, adapter=OracleAdapter(store),
                       generation=store.generation)
    accel = KnownGroupBy()
    inst = Instantiation("known_groupby")
    inst.variables["input"] = Scan("lineitem")
    inst.repetitions["keys"] = [RepInstanceBinding({"key": "l_returnflag"}),
                                RepInstanceBinding({"key": "l_linestatus"})]
    inst.repetitions["aggs"] = [
        RepInstanceBinding({"sum_arg": ColumnRef("l_quantity")},
                           {"agg_kind": 0}),
        RepInstanceBinding({"sum_arg": ColumnRef("l_extendedprice")},
                           {"agg_kind": 0}),
        RepInstanceBinding({"avg_arg": ColumnRef("l_discount")},
                           {"agg_kind": 2}),
        RepInstanceBinding({"min_arg": ColumnRef("l_shipdate")},
                           {"agg_kind": 3}),
        RepInstanceBinding({}, {"agg_kind": 5}),
    ]
    state = accel.build(inst, ctx)
    batch = execute_oracle(Scan("lineitem"), store)
    print(f"\nfused group-by accelerator: {rows} rows, 6 groups, 5 aggregates")
    import qaccel.kernels as K
    for name, impl in backends().items():
        K.fused_group_agg_i64 = impl.fused_group_agg_i64
        K.fused_group_agg_f64 = impl.fused_group_agg_f64
        t = time_best(lambda: accel.run(state, inst, batch, ctx), repeats)
        print(f"{name:<10} {t*1000:>10.1f}ms")


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--rows", type=int, default=2_000_000)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args()
    names = list(backends())
    print(f"available backends: {', '.join(names)}")
    if len(names) < 2:
        print("note: compiled backend missing; install with a C compiler "
              "to compare")
    bench_raw_kernels(args.rows, args.repeats)
    bench_fused_groupby(args.rows, args.repeats)


if __name__ == "__main__":
    main()
