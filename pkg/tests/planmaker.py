"""Random well-typed plan generator shared by round-trip and e-graph tests."""

from __future__ import annotations

import numpy as np

from qaccel.plan import (AggExpr, And, Arith, Between, ColumnRef, Compare,
                         Filter, GroupByAgg, InnerJoin, IsNull, LeftJoin,
                         Like, Limit, Literal, Not, Or, Project, Scan, Sort)
from qaccel.schema import output_schema
from qaccel.types import BOOL, INT, Kind

CMP_OPS = ["=", "<>", "<", "<=", ">", ">="]


def _literal_for(rng, f):
    k = f.ctype.kind
    if k == Kind.INT:
        return Literal(int(rng.integers(-5, 50)), f.ctype)
    if k == Kind.DATE:
        return Literal(int(rng.integers(8000, 10500)), f.ctype)
    if k == Kind.DECIMAL:
        return Literal(int(rng.integers(-500, 5000)), f.ctype)
    if k == Kind.REAL:
        return Literal(float(np.round(rng.normal() * 10, 3)), f.ctype)
    if k == Kind.STRING:
        return Literal(rng.choice(["ab", "cd", "a", "zz"]), f.ctype)
    return Literal(bool(rng.integers(0, 2)), f.ctype)


def random_predicate(rng, schema, depth=2):
    cols = [f for f in schema if f.ctype.kind != Kind.BOOL]
    if not cols or depth <= 0:
        return Literal(bool(rng.integers(0, 2)), BOOL)
    choice = rng.integers(0, 6)
    f = cols[rng.integers(0, len(cols))]
    ref = ColumnRef(f.name)
    if choice == 0:
        return Compare(CMP_OPS[rng.integers(0, 6)], ref, _literal_for(rng, f))
    if choice == 1:
        return IsNull(ref, negated=bool(rng.integers(0, 2)))
    if choice == 2 and f.ctype.kind == Kind.STRING:
        return Like(ref, rng.choice(["a%", "%b", "%a%", "c_"]),
                    negated=bool(rng.integers(0, 2)))
    if choice == 3:
        return Between(ref, _literal_for(rng, f), _literal_for(rng, f))
    if choice == 4:
        return And(random_predicate(rng, schema, depth - 1),
                   random_predicate(rng, schema, depth - 1))
    if choice == 5:
        return Or(random_predicate(rng, schema, depth - 1),
                  Not(random_predicate(rng, schema, depth - 1)))
    return Compare("=", ref, _literal_for(rng, f))


def _numeric_fields(schema):
    return [f for f in schema if f.ctype.is_numeric]


def random_plan(rng, catalog, depth=3, tables=None):
    """A random well-typed plan of bounded depth over the catalog."""
    tables = tables or list(catalog.tables)
    if depth <= 0:
        return Scan(rng.choice(tables))
    kind = rng.integers(0, 7)
    child = random_plan(rng, catalog, depth - 1, tables)
    schema = output_schema(child, catalog)
    if kind == 0:
        return Filter(child, random_predicate(rng, schema))
    if kind == 1:
        nums = _numeric_fields(schema)
        exprs, aliases = [], []
        n = int(rng.integers(1, max(2, len(schema))))
        picks = rng.choice(len(schema), size=min(n, len(schema)), replace=False)
        for i, pi in enumerate(picks):
            f = schema[pi]
            if f.ctype.is_numeric and rng.random() < 0.3 and nums:
                other = nums[rng.integers(0, len(nums))]
                exprs.append(Arith(rng.choice(["+", "-", "*"]),
                                   ColumnRef(f.name), ColumnRef(other.name)))
            else:
                exprs.append(ColumnRef(f.name))
            aliases.append(f"p{i}_{f.name}")
        return Project(child, tuple(exprs), tuple(aliases))
    if kind == 2:
        other = Scan(rng.choice(tables))
        oschema = output_schema(other, catalog)
        if {f.name for f in schema} & {f.name for f in oschema}:
            return Filter(child, random_predicate(rng, schema))
        pairs = [(a, b) for a in schema for b in oschema
                 if a.ctype.is_numeric and b.ctype.is_numeric]
        if pairs:
            a, b = pairs[rng.integers(0, len(pairs))]
            cond = Compare("=", ColumnRef(a.name), ColumnRef(b.name))
        else:
            cond = Literal(True, BOOL)
        cls = InnerJoin if rng.random() < 0.6 else LeftJoin
        return cls(child, other, cond)
    if kind == 3:
        n_keys = int(rng.integers(0, min(3, len(schema)) + 1))
        picks = rng.choice(len(schema), size=n_keys, replace=False)
        keys = tuple(ColumnRef(schema[i].name) for i in picks)
        key_names = tuple(f"k{i}_{schema[p].name}" for i, p in enumerate(picks))
        aggs = [AggExpr("count_star", None, "n")]
        nums = _numeric_fields(schema)
        if nums:
            f = nums[rng.integers(0, len(nums))]
            aggs.append(AggExpr(rng.choice(["sum", "avg", "min", "max", "count"]),
                                ColumnRef(f.name), f"a_{f.name}"))
        return GroupByAgg(child, keys, key_names, tuple(aggs))
    if kind == 4:
        n_keys = int(rng.integers(1, min(2, len(schema)) + 1))
        picks = rng.choice(len(schema), size=n_keys, replace=False)
        keys = tuple(ColumnRef(schema[i].name) for i in picks)
        asc = tuple(bool(rng.integers(0, 2)) for _ in keys)
        nf = tuple(bool(rng.integers(0, 2)) for _ in keys)
        return Sort(child, keys, asc, nf)
    if kind == 5:
        return Limit(child, int(rng.integers(0, 20)))
    return child
