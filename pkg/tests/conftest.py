import numpy as np
import pytest
from fractions import Fraction

from qaccel.batch import ColumnarBatch
from qaccel.store import DataStore
from qaccel.synth import generate_store
from qaccel.types import (Catalog, ColumnMeta, ColumnType, Kind, TableMeta)

INT = ColumnType(Kind.INT)
REAL = ColumnType(Kind.REAL)
STR = ColumnType(Kind.STRING)
DATE = ColumnType(Kind.DATE)
DEC2 = ColumnType(Kind.DECIMAL, 2)
BOOL = ColumnType(Kind.BOOL)


def make_store(tables):
    """tables: {name: (columns [(name, type, nullable)], rows [tuples])}"""
    metas = []
    for name, (cols, rows) in tables.items():
        metas.append(TableMeta(name, [ColumnMeta(n, t, nl) for n, t, nl in cols]))
    catalog = Catalog(metas)
    store = DataStore(catalog)
    for name, (cols, rows) in tables.items():
        meta = catalog.table(name)
        store.put(name, ColumnarBatch.from_rows(
            [c.as_field() for c in meta.columns], rows))
    from qaccel.store import compute_stats
    for name in tables:
        compute_stats(store, name)
    return store


@pytest.fixture
def tiny_store():
    """Two small tables with nulls for three-valued-logic corners."""
    return make_store({
        "t": ([("a", INT, True), ("b", INT, True), ("s", STR, True)],
              [(1, 10, "ab"), (None, 20, "cd"), (3, None, None),
               (4, 40, "ad"), (2, 20, "bb")]),
        "u": ([("k", INT, True), ("v", DEC2, True)],
              [(1, 150), (2, -250), (2, None), (5, 300)]),
    })


@pytest.fixture(scope="session")
def bench_store():
    """Seeded mid-size benchmark-shaped dataset shared across tests."""
    return generate_store(seed=7, customers=200, orders=2000, lineitems=4000)


def fraction_rows(batch: ColumnarBatch):
    """Batch rows with decimals as Fractions, for oracle comparisons."""
    out = []
    for r in range(batch.num_rows):
        row = []
        for c, f in enumerate(batch.schema):
            v = batch.cell(r, c)
            if v is not None and f.ctype.kind == Kind.DECIMAL:
                v = Fraction(v, 10 ** f.ctype.scale)
            row.append(v)
        out.append(row)
    return out


def assert_rows_match(batch: ColumnarBatch, expected_rows, float_rel=1e-9):
    """Multiset equality between a batch and oracle rows."""
    from oracle_bruteforce import canonical
    got = canonical(fraction_rows(batch))
    want = canonical([list(r) for r in expected_rows])
    assert len(got) == len(want), f"{len(got)} rows != {len(want)}"
    for g, w in zip(got, want):
        assert len(g) == len(w)
        for a, b in zip(g, w):
            if isinstance(a, float) or isinstance(b, float):
                if a is None or b is None:
                    assert a is None and b is None, (a, b)
                else:
                    fa, fb = float(a), float(b)
                    if fa == fb == 0:
                        continue
                    assert abs(fa - fb) <= float_rel * max(abs(fa), abs(fb)), (a, b)
            else:
                assert a == b, (a, b)
