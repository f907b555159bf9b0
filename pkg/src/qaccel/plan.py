"""Logical plan and scalar expression trees.

All nodes are immutable and hashable so they can be hash-consed into
e-graphs, used as dict keys, and digested for deduplication.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

from .errors import QaccelError
from .types import ColumnType, Kind, _type_from_str


# ---------------------------------------------------------------------------
# scalar expressions
# ---------------------------------------------------------------------------

class ScalarExpr:
    __slots__ = ()


@dataclass(frozen=True)
class ColumnRef(ScalarExpr):
    name: str


@dataclass(frozen=True)
class Literal(ScalarExpr):
    value: object          # python int/float/str/bool or None for typed NULL
    ctype: ColumnType


@dataclass(frozen=True)
class Arith(ScalarExpr):
    op: str                # + - * /
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True)
class Compare(ScalarExpr):
    op: str                # = <> < <= > >=
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True)
class Between(ScalarExpr):
    expr: ScalarExpr
    low: ScalarExpr
    high: ScalarExpr


@dataclass(frozen=True)
class Like(ScalarExpr):
    expr: ScalarExpr
    pattern: str
    negated: bool = False


@dataclass(frozen=True)
class IsNull(ScalarExpr):
    expr: ScalarExpr
    negated: bool = False


@dataclass(frozen=True)
class And(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True)
class Or(ScalarExpr):
    left: ScalarExpr
    right: ScalarExpr


@dataclass(frozen=True)
class Not(ScalarExpr):
    expr: ScalarExpr


TRUE = Literal(True, ColumnType(Kind.BOOL))


def is_not_true(p: ScalarExpr) -> ScalarExpr:
    """SQL ``p IS NOT TRUE`` spelled inside the core algebra."""
    return Or(Not(p), IsNull(p))


AGG_FUNCS = ("sum", "count", "count_star", "avg", "min", "max")


@dataclass(frozen=True)
class AggExpr:
    func: str
    arg: ScalarExpr | None   # None only for count_star
    alias: str

    def __post_init__(self):
        if self.func not in AGG_FUNCS:
            raise QaccelError(f"unknown aggregate {self.func!r}")
        if (self.arg is None) != (self.func == "count_star"):
            raise QaccelError(f"aggregate {self.func} argument mismatch")


# ---------------------------------------------------------------------------
# logical plans
# ---------------------------------------------------------------------------

class LogicalPlan:
    __slots__ = ()


@dataclass(frozen=True)
class Scan(LogicalPlan):
    table: str


@dataclass(frozen=True)
class Filter(LogicalPlan):
    child: LogicalPlan
    predicate: ScalarExpr


@dataclass(frozen=True)
class Project(LogicalPlan):
    child: LogicalPlan
    exprs: tuple[ScalarExpr, ...]
    aliases: tuple[str, ...]


@dataclass(frozen=True)
class InnerJoin(LogicalPlan):
    left: LogicalPlan
    right: LogicalPlan
    condition: ScalarExpr


@dataclass(frozen=True)
class LeftJoin(LogicalPlan):
    left: LogicalPlan
    right: LogicalPlan
    condition: ScalarExpr


@dataclass(frozen=True)
class GroupByAgg(LogicalPlan):
    child: LogicalPlan
    keys: tuple[ScalarExpr, ...]
    key_names: tuple[str, ...]
    aggs: tuple[AggExpr, ...]


@dataclass(frozen=True)
class Sort(LogicalPlan):
    child: LogicalPlan
    keys: tuple[ScalarExpr, ...]
    ascending: tuple[bool, ...]
    nulls_first: tuple[bool, ...]


@dataclass(frozen=True)
class Limit(LogicalPlan):
    child: LogicalPlan
    n: int


@dataclass(frozen=True)
class AcceleratorCall(LogicalPlan):
    instance_id: str
    call_id: str
    children: tuple[LogicalPlan, ...]


# ---------------------------------------------------------------------------
# traversal helpers
# ---------------------------------------------------------------------------

def plan_children(p: LogicalPlan) -> tuple[LogicalPlan, ...]:
    if isinstance(p, Scan):
        return ()
    if isinstance(p, (Filter, Project, GroupByAgg, Sort, Limit)):
        return (p.child,)
    if isinstance(p, (InnerJoin, LeftJoin)):
        return (p.left, p.right)
    if isinstance(p, AcceleratorCall):
        return p.children
    raise QaccelError(f"not a plan node: {p!r}")


def walk_plan(p: LogicalPlan):
    yield p
    for c in plan_children(p):
        yield from walk_plan(c)


def with_children(p: LogicalPlan, kids: tuple) -> LogicalPlan:
    """Copy of the node with its plan children replaced, in order."""
    if isinstance(p, Scan):
        return p
    if isinstance(p, Filter):
        return Filter(kids[0], p.predicate)
    if isinstance(p, Project):
        return Project(kids[0], p.exprs, p.aliases)
    if isinstance(p, InnerJoin):
        return InnerJoin(kids[0], kids[1], p.condition)
    if isinstance(p, LeftJoin):
        return LeftJoin(kids[0], kids[1], p.condition)
    if isinstance(p, GroupByAgg):
        return GroupByAgg(kids[0], p.keys, p.key_names, p.aggs)
    if isinstance(p, Sort):
        return Sort(kids[0], p.keys, p.ascending, p.nulls_first)
    if isinstance(p, Limit):
        return Limit(kids[0], p.n)
    if isinstance(p, AcceleratorCall):
        return AcceleratorCall(p.instance_id, p.call_id, tuple(kids))
    raise QaccelError(f"not a plan node: {p!r}")


def plan_exprs(p: LogicalPlan) -> list[ScalarExpr]:
    """Expressions attached directly to a plan node."""
    if isinstance(p, Filter):
        return [p.predicate]
    if isinstance(p, Project):
        return list(p.exprs)
    if isinstance(p, (InnerJoin, LeftJoin)):
        return [p.condition]
    if isinstance(p, GroupByAgg):
        return list(p.keys) + [a.arg for a in p.aggs if a.arg is not None]
    if isinstance(p, Sort):
        return list(p.keys)
    return []


def expr_children(e: ScalarExpr) -> tuple[ScalarExpr, ...]:
    if isinstance(e, (ColumnRef, Literal)):
        return ()
    if isinstance(e, (Arith, Compare, And, Or)):
        return (e.left, e.right)
    if isinstance(e, Between):
        return (e.expr, e.low, e.high)
    if isinstance(e, (Like, IsNull, Not)):
        return (e.expr,)
    raise QaccelError(f"not an expression node: {e!r}")


def walk_expr(e: ScalarExpr):
    yield e
    for c in expr_children(e):
        yield from walk_expr(c)


def expr_columns(e: ScalarExpr) -> set[str]:
    return {n.name for n in walk_expr(e) if isinstance(n, ColumnRef)}


def plan_column_refs(p: LogicalPlan) -> set[str]:
    cols = set()
    for node in walk_plan(p):
        for e in plan_exprs(node):
            cols |= expr_columns(e)
    return cols


def count_operators(p: LogicalPlan) -> int:
    return sum(1 for _ in walk_plan(p))


def split_conjuncts(e: ScalarExpr) -> list[ScalarExpr]:
    if isinstance(e, And):
        return split_conjuncts(e.left) + split_conjuncts(e.right)
    return [e]


def conjoin(parts: list[ScalarExpr]) -> ScalarExpr:
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = And(out, p)
    return out


# ---------------------------------------------------------------------------
# JSON serialization and digests
# ---------------------------------------------------------------------------

def expr_to_json(e: ScalarExpr):
    if isinstance(e, ColumnRef):
        return {"k": "col", "name": e.name}
    if isinstance(e, Literal):
        return {"k": "lit", "value": e.value, "type": repr(e.ctype)}
    if isinstance(e, Arith):
        return {"k": "arith", "op": e.op,
                "l": expr_to_json(e.left), "r": expr_to_json(e.right)}
    if isinstance(e, Compare):
        return {"k": "cmp", "op": e.op,
                "l": expr_to_json(e.left), "r": expr_to_json(e.right)}
    if isinstance(e, Between):
        return {"k": "between", "e": expr_to_json(e.expr),
                "lo": expr_to_json(e.low), "hi": expr_to_json(e.high)}
    if isinstance(e, Like):
        return {"k": "like", "e": expr_to_json(e.expr),
                "pattern": e.pattern, "negated": e.negated}
    if isinstance(e, IsNull):
        return {"k": "isnull", "e": expr_to_json(e.expr), "negated": e.negated}
    if isinstance(e, And):
        return {"k": "and", "l": expr_to_json(e.left), "r": expr_to_json(e.right)}
    if isinstance(e, Or):
        return {"k": "or", "l": expr_to_json(e.left), "r": expr_to_json(e.right)}
    if isinstance(e, Not):
        return {"k": "not", "e": expr_to_json(e.expr)}
    raise QaccelError(f"cannot serialize {e!r}")


def expr_from_json(d) -> ScalarExpr:
    k = d["k"]
    if k == "col":
        return ColumnRef(d["name"])
    if k == "lit":
        return Literal(d["value"], _type_from_str(d["type"]))
    if k == "arith":
        return Arith(d["op"], expr_from_json(d["l"]), expr_from_json(d["r"]))
    if k == "cmp":
        return Compare(d["op"], expr_from_json(d["l"]), expr_from_json(d["r"]))
    if k == "between":
        return Between(expr_from_json(d["e"]), expr_from_json(d["lo"]),
                       expr_from_json(d["hi"]))
    if k == "like":
        return Like(expr_from_json(d["e"]), d["pattern"], d["negated"])
    if k == "isnull":
        return IsNull(expr_from_json(d["e"]), d["negated"])
    if k == "and":
        return And(expr_from_json(d["l"]), expr_from_json(d["r"]))
    if k == "or":
        return Or(expr_from_json(d["l"]), expr_from_json(d["r"]))
    if k == "not":
        return Not(expr_from_json(d["e"]))
    raise QaccelError(f"cannot deserialize expression kind {k!r}")


def plan_to_json(p: LogicalPlan):
    if isinstance(p, Scan):
        return {"k": "scan", "table": p.table}
    if isinstance(p, Filter):
        return {"k": "filter", "child": plan_to_json(p.child),
                "pred": expr_to_json(p.predicate)}
    if isinstance(p, Project):
        return {"k": "project", "child": plan_to_json(p.child),
                "exprs": [expr_to_json(e) for e in p.exprs],
                "aliases": list(p.aliases)}
    if isinstance(p, InnerJoin):
        return {"k": "ijoin", "l": plan_to_json(p.left), "r": plan_to_json(p.right),
                "on": expr_to_json(p.condition)}
    if isinstance(p, LeftJoin):
        return {"k": "ljoin", "l": plan_to_json(p.left), "r": plan_to_json(p.right),
                "on": expr_to_json(p.condition)}
    if isinstance(p, GroupByAgg):
        return {"k": "groupby", "child": plan_to_json(p.child),
                "keys": [expr_to_json(e) for e in p.keys],
                "key_names": list(p.key_names),
                "aggs": [{"func": a.func,
                          "arg": expr_to_json(a.arg) if a.arg is not None else None,
                          "alias": a.alias} for a in p.aggs]}
    if isinstance(p, Sort):
        return {"k": "sort", "child": plan_to_json(p.child),
                "keys": [expr_to_json(e) for e in p.keys],
                "asc": list(p.ascending), "nulls_first": list(p.nulls_first)}
    if isinstance(p, Limit):
        return {"k": "limit", "child": plan_to_json(p.child), "n": p.n}
    if isinstance(p, AcceleratorCall):
        return {"k": "accel", "instance": p.instance_id, "call": p.call_id,
                "children": [plan_to_json(c) for c in p.children]}
    raise QaccelError(f"cannot serialize plan {p!r}")


def plan_from_json(d) -> LogicalPlan:
    k = d["k"]
    if k == "scan":
        return Scan(d["table"])
    if k == "filter":
        return Filter(plan_from_json(d["child"]), expr_from_json(d["pred"]))
    if k == "project":
        return Project(plan_from_json(d["child"]),
                       tuple(expr_from_json(e) for e in d["exprs"]),
                       tuple(d["aliases"]))
    if k == "ijoin":
        return InnerJoin(plan_from_json(d["l"]), plan_from_json(d["r"]),
                         expr_from_json(d["on"]))
    if k == "ljoin":
        return LeftJoin(plan_from_json(d["l"]), plan_from_json(d["r"]),
                        expr_from_json(d["on"]))
    if k == "groupby":
        return GroupByAgg(plan_from_json(d["child"]),
                          tuple(expr_from_json(e) for e in d["keys"]),
                          tuple(d["key_names"]),
                          tuple(AggExpr(a["func"],
                                        expr_from_json(a["arg"]) if a["arg"] else None,
                                        a["alias"]) for a in d["aggs"]))
    if k == "sort":
        return Sort(plan_from_json(d["child"]),
                    tuple(expr_from_json(e) for e in d["keys"]),
                    tuple(d["asc"]), tuple(d["nulls_first"]))
    if k == "limit":
        return Limit(plan_from_json(d["child"]), d["n"])
    if k == "accel":
        return AcceleratorCall(d["instance"], d["call"],
                               tuple(plan_from_json(c) for c in d["children"]))
    raise QaccelError(f"cannot deserialize plan kind {k!r}")


def digest(obj) -> str:
    """Stable hex digest of a plan, expression, or JSON-able structure."""
    if isinstance(obj, LogicalPlan):
        doc = plan_to_json(obj)
    elif isinstance(obj, ScalarExpr):
        doc = expr_to_json(obj)
    else:
        doc = obj
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


PLAN_NODE_KINDS = ("Scan", "Filter", "Project", "InnerJoin", "LeftJoin",
                   "GroupByAgg", "Sort", "Limit", "AcceleratorCall")


def operator_histogram(p: LogicalPlan) -> list[int]:
    """Count of each operator kind in the subtree, in PLAN_NODE_KINDS order."""
    counts = dict.fromkeys(PLAN_NODE_KINDS, 0)
    for node in walk_plan(p):
        counts[type(node).__name__] += 1
    return [counts[k] for k in PLAN_NODE_KINDS]
