"""Synthetic order/customer/lineitem dataset in the shape of the classic
analytical benchmark: a customer dimension, an orders fact with free-text
comments, and a wide lineitem fact.  Deterministic given a seed."""

from __future__ import annotations

import numpy as np

from .batch import ColumnarBatch
from .store import DataStore, compute_stats
from .types import (Catalog, ColumnMeta, ColumnType, Kind, TableMeta,
                    date_to_days)

INT = ColumnType(Kind.INT)
REAL = ColumnType(Kind.REAL)
STR = ColumnType(Kind.STRING)
DATE = ColumnType(Kind.DATE)
DEC2 = ColumnType(Kind.DECIMAL, 2)

_WORDS = ("carefully final deposits furiously ironic pinto beans quick brown "
          "accounts regular packages bold theodolites silent foxes express "
          "asymptotes blithely even instructions slyly").split()


def make_catalog() -> Catalog:
    return Catalog([
        TableMeta("customer", [
            ColumnMeta("c_custkey", INT, nullable=False),
            ColumnMeta("c_name", STR, nullable=False),
            ColumnMeta("c_nationkey", INT, nullable=False),
            ColumnMeta("c_acctbal", DEC2, nullable=False),
        ], primary_key=("c_custkey",)),
        TableMeta("orders", [
            ColumnMeta("o_orderkey", INT, nullable=False),
            ColumnMeta("o_custkey", INT, nullable=False),
            ColumnMeta("o_orderstatus", STR, nullable=False),
            ColumnMeta("o_totalprice", DEC2, nullable=False),
            ColumnMeta("o_orderdate", DATE, nullable=False),
            ColumnMeta("o_comment", STR, nullable=True),
        ], primary_key=("o_orderkey",),
           foreign_keys=[("o_custkey", "customer", "c_custkey")]),
        TableMeta("lineitem", [
            ColumnMeta("l_orderkey", INT, nullable=False),
            ColumnMeta("l_linenumber", INT, nullable=False),
            ColumnMeta("l_quantity", DEC2, nullable=False),
            ColumnMeta("l_extendedprice", DEC2, nullable=False),
            ColumnMeta("l_discount", DEC2, nullable=False),
            ColumnMeta("l_tax", DEC2, nullable=False),
            ColumnMeta("l_returnflag", STR, nullable=False),
            ColumnMeta("l_linestatus", STR, nullable=False),
            ColumnMeta("l_shipdate", DATE, nullable=False),
        ], foreign_keys=[("l_orderkey", "orders", "o_orderkey")]),
    ])


def _comment_pool(rng, size=256, special_fraction=0.05):
    pool = []
    n_special = max(1, int(size * special_fraction))
    for i in range(size):
        words = list(rng.choice(_WORDS, size=6))
        if i < n_special:
            words[2:4] = ["special", "requests"]
        pool.append(" ".join(words))
    return np.array(pool, dtype=object)


def _batch(meta, arrays, valids=None):
    n = len(arrays[0])
    if valids is None:
        valids = [np.ones(n, dtype=bool) for _ in arrays]
    return ColumnarBatch([c.as_field() for c in meta.columns], arrays, valids, n)


def generate_store(seed: int = 0, customers: int = 1000, orders: int = 10000,
                   lineitems: int | None = None,
                   comment_null_fraction: float = 0.01) -> DataStore:
    rng = np.random.default_rng(seed)
    catalog = make_catalog()
    store = DataStore(catalog)
    lineitems = 4 * orders if lineitems is None else lineitems

    ckey = np.arange(1, customers + 1, dtype=np.int64)
    names = np.array([f"customer#{i:09d}" for i in ckey], dtype=object)
    nation = rng.integers(0, 25, customers).astype(np.int64)
    acctbal = rng.integers(-99999, 999999, customers).astype(np.int64)
    store.put("customer", _batch(catalog.table("customer"),
                                 [ckey, names, nation, acctbal]))

    okey = np.arange(1, orders + 1, dtype=np.int64)
    ocust = rng.integers(1, customers + 1, orders).astype(np.int64)
    status = np.array(["O", "F", "P"], dtype=object)[
        rng.integers(0, 3, orders)]
    price = rng.integers(90000, 5000000, orders).astype(np.int64)
    lo = date_to_days("1992-01-01")
    hi = date_to_days("1998-08-02")
    odate = rng.integers(lo, hi + 1, orders).astype(np.int64)
    pool = _comment_pool(rng)
    comments = pool[rng.integers(0, len(pool), orders)]
    cvalid = rng.random(orders) >= comment_null_fraction
    store.put("orders", _batch(
        catalog.table("orders"),
        [okey, ocust, status, price, odate, comments],
        [np.ones(orders, dtype=bool)] * 5 + [cvalid]))

    lkey = rng.integers(1, orders + 1, lineitems).astype(np.int64)
    lnum = np.arange(lineitems, dtype=np.int64) % 7 + 1
    qty = rng.integers(100, 5100, lineitems).astype(np.int64)
    eprice = rng.integers(90000, 10000000, lineitems).astype(np.int64)
    disc = rng.integers(0, 11, lineitems).astype(np.int64)
    tax = rng.integers(0, 9, lineitems).astype(np.int64)
    rflag = np.array(["A", "N", "R"], dtype=object)[rng.integers(0, 3, lineitems)]
    lstatus = np.array(["O", "F"], dtype=object)[rng.integers(0, 2, lineitems)]
    sdate = rng.integers(lo, hi + 1, lineitems).astype(np.int64)
    store.put("lineitem", _batch(
        catalog.table("lineitem"),
        [lkey, lnum, qty, eprice, disc, tax, rflag, lstatus, sdate]))

    for name in ("customer", "orders", "lineitem"):
        compute_stats(store, name)
    return store


def write_csv_dir(store: DataStore, out_dir):
    """Dump every base table as <out_dir>/<name>.csv plus catalog.json."""
    import json
    import os
    from .store import write_csv
    os.makedirs(out_dir, exist_ok=True)
    for name in store.catalog.tables:
        if name in store.temp_names:
            continue
        write_csv(os.path.join(out_dir, f"{name}.csv"), store.get(name))
    with open(os.path.join(out_dir, "catalog.json"), "w") as f:
        json.dump(store.catalog.to_json(), f, indent=1)


def main(argv=None):
    import argparse
    p = argparse.ArgumentParser(description="generate a synthetic dataset")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--customers", type=int, default=1000)
    p.add_argument("--orders", type=int, default=10000)
    p.add_argument("--lineitems", type=int, default=None)
    args = p.parse_args(argv)
    store = generate_store(args.seed, args.customers, args.orders,
                           args.lineitems)
    write_csv_dir(store, args.out_dir)
    print(f"wrote {args.out_dir}: "
          + ", ".join(f"{n}={store.get(n).num_rows}" for n in
                      ("customer", "orders", "lineitem")))


if __name__ == "__main__":
    main()
