"""Plan/expression <-> term encoding for the e-graph and templates.

Terms are (label, payload, children).  Variable-arity plan parts that
templates must be able to iterate (group-by keys, aggregate lists) are
encoded as cons-lists so repetition patterns see them as chains.  Node
payloads (aliases, literal values, table names) are ignored by pattern
matching and carried through extraction.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import QaccelError
from ..plan import (AcceleratorCall, AggExpr, And, Arith, Between, ColumnRef,
                    Compare, Filter, GroupByAgg, InnerJoin, IsNull, LeftJoin,
                    Like, Limit, Literal, LogicalPlan, Not, Or, Project,
                    ScalarExpr, Scan, Sort)
from ..types import _type_from_str


@dataclass(frozen=True)
class Term:
    label: str
    payload: object
    children: tuple["Term", ...]

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.children)


# sorts drive typed-wildcard matching
PLAN = "plan"
BEXPR = "bexpr"
VEXPR = "vexpr"
LIST = "list"
AGG = "agg"
TREF = "tref"

PLAN_LABELS = {"Scan", "Filter", "Project", "InnerJoin", "LeftJoin",
               "GroupByAgg", "Sort", "Limit", "Accel"}
LIST_LABELS = {"Keys.cons", "Keys.nil", "Aggs.cons", "Aggs.nil"}
AGG_LABELS = {"Agg.sum", "Agg.count", "Agg.count_star", "Agg.avg",
              "Agg.min", "Agg.max"}
BEXPR_LABELS = {"Between", "Like", "IsNull", "And", "Or", "Not"}


def label_sort(label: str, payload=None) -> str:
    if label in PLAN_LABELS:
        return PLAN
    if label in LIST_LABELS:
        return LIST
    if label in AGG_LABELS:
        return AGG
    if label == "TableRef":
        return TREF
    if label.startswith("Cmp:") or label in BEXPR_LABELS:
        return BEXPR
    if label == "Literal":
        _, tstr = payload
        return BEXPR if tstr == "bool" else VEXPR
    return VEXPR  # ColumnRef, Arith:*, unknown leaves used in tests


def encode_expr(e: ScalarExpr) -> Term:
    if isinstance(e, ColumnRef):
        return Term("ColumnRef", e.name, ())
    if isinstance(e, Literal):
        return Term("Literal", (e.value, repr(e.ctype)), ())
    if isinstance(e, Arith):
        return Term(f"Arith:{e.op}", None,
                    (encode_expr(e.left), encode_expr(e.right)))
    if isinstance(e, Compare):
        return Term(f"Cmp:{e.op}", None,
                    (encode_expr(e.left), encode_expr(e.right)))
    if isinstance(e, Between):
        return Term("Between", None, (encode_expr(e.expr), encode_expr(e.low),
                                      encode_expr(e.high)))
    if isinstance(e, Like):
        return Term("Like", (e.pattern, e.negated), (encode_expr(e.expr),))
    if isinstance(e, IsNull):
        return Term("IsNull", e.negated, (encode_expr(e.expr),))
    if isinstance(e, And):
        return Term("And", None, (encode_expr(e.left), encode_expr(e.right)))
    if isinstance(e, Or):
        return Term("Or", None, (encode_expr(e.left), encode_expr(e.right)))
    if isinstance(e, Not):
        return Term("Not", None, (encode_expr(e.expr),))
    raise QaccelError(f"cannot encode expression {e!r}")


def _encode_agg(a: AggExpr) -> Term:
    label = f"Agg.{a.func}"
    kids = () if a.arg is None else (encode_expr(a.arg),)
    return Term(label, a.alias, kids)


def _cons(label_base: str, items, payloads=None) -> Term:
    out = Term(f"{label_base}.nil", None, ())
    pairs = list(zip(items, payloads)) if payloads is not None \
        else [(i, None) for i in items]
    for item, payload in reversed(pairs):
        out = Term(f"{label_base}.cons", payload, (item, out))
    return out


def encode_plan(p: LogicalPlan) -> Term:
    if isinstance(p, Scan):
        return Term("Scan", None, (Term("TableRef", p.table, ()),))
    if isinstance(p, Filter):
        return Term("Filter", None, (encode_plan(p.child),
                                     encode_expr(p.predicate)))
    if isinstance(p, Project):
        return Term("Project", tuple(p.aliases),
                    (encode_plan(p.child),) + tuple(encode_expr(e)
                                                    for e in p.exprs))
    if isinstance(p, InnerJoin):
        return Term("InnerJoin", None, (encode_plan(p.left),
                                        encode_plan(p.right),
                                        encode_expr(p.condition)))
    if isinstance(p, LeftJoin):
        return Term("LeftJoin", None, (encode_plan(p.left),
                                       encode_plan(p.right),
                                       encode_expr(p.condition)))
    if isinstance(p, GroupByAgg):
        keys = _cons("Keys", [encode_expr(k) for k in p.keys],
                     payloads=list(p.key_names))
        aggs = _cons("Aggs", [_encode_agg(a) for a in p.aggs])
        return Term("GroupByAgg", None, (encode_plan(p.child), keys, aggs))
    if isinstance(p, Sort):
        return Term("Sort", (tuple(p.ascending), tuple(p.nulls_first)),
                    (encode_plan(p.child),) + tuple(encode_expr(k)
                                                    for k in p.keys))
    if isinstance(p, Limit):
        return Term("Limit", p.n, (encode_plan(p.child),))
    if isinstance(p, AcceleratorCall):
        return Term("Accel", (p.instance_id, p.call_id),
                    tuple(encode_plan(c) for c in p.children))
    raise QaccelError(f"cannot encode plan {p!r}")


def _uncons(label_base: str, t: Term):
    items, payloads = [], []
    while t.label == f"{label_base}.cons":
        items.append(t.children[0])
        payloads.append(t.payload)
        t = t.children[1]
    if t.label != f"{label_base}.nil":
        raise QaccelError(f"malformed {label_base} list ending in {t.label}")
    return items, payloads


def decode_expr(t: Term) -> ScalarExpr:
    if t.label == "ColumnRef":
        return ColumnRef(t.payload)
    if t.label == "Literal":
        value, tstr = t.payload
        return Literal(value, _type_from_str(tstr))
    if t.label.startswith("Arith:"):
        return Arith(t.label[6:], decode_expr(t.children[0]),
                     decode_expr(t.children[1]))
    if t.label.startswith("Cmp:"):
        return Compare(t.label[4:], decode_expr(t.children[0]),
                       decode_expr(t.children[1]))
    if t.label == "Between":
        return Between(decode_expr(t.children[0]), decode_expr(t.children[1]),
                       decode_expr(t.children[2]))
    if t.label == "Like":
        pattern, negated = t.payload
        return Like(decode_expr(t.children[0]), pattern, negated)
    if t.label == "IsNull":
        return IsNull(decode_expr(t.children[0]), t.payload)
    if t.label == "And":
        return And(decode_expr(t.children[0]), decode_expr(t.children[1]))
    if t.label == "Or":
        return Or(decode_expr(t.children[0]), decode_expr(t.children[1]))
    if t.label == "Not":
        return Not(decode_expr(t.children[0]))
    raise QaccelError(f"cannot decode expression term {t.label!r}")


def decode_plan(t: Term) -> LogicalPlan:
    if t.label == "Scan":
        return Scan(t.children[0].payload)
    if t.label == "Filter":
        return Filter(decode_plan(t.children[0]), decode_expr(t.children[1]))
    if t.label == "Project":
        return Project(decode_plan(t.children[0]),
                       tuple(decode_expr(c) for c in t.children[1:]),
                       tuple(t.payload))
    if t.label == "InnerJoin":
        return InnerJoin(decode_plan(t.children[0]), decode_plan(t.children[1]),
                         decode_expr(t.children[2]))
    if t.label == "LeftJoin":
        return LeftJoin(decode_plan(t.children[0]), decode_plan(t.children[1]),
                        decode_expr(t.children[2]))
    if t.label == "GroupByAgg":
        keys, key_names = _uncons("Keys", t.children[1])
        aggs, _ = _uncons("Aggs", t.children[2])
        return GroupByAgg(decode_plan(t.children[0]),
                          tuple(decode_expr(k) for k in keys),
                          tuple(key_names),
                          tuple(_decode_agg(a) for a in aggs))
    if t.label == "Sort":
        asc, nf = t.payload
        return Sort(decode_plan(t.children[0]),
                    tuple(decode_expr(k) for k in t.children[1:]), asc, nf)
    if t.label == "Limit":
        return Limit(decode_plan(t.children[0]), t.payload)
    if t.label == "Accel":
        iid, cid = t.payload
        return AcceleratorCall(iid, cid,
                               tuple(decode_plan(c) for c in t.children))
    raise QaccelError(f"cannot decode plan term {t.label!r}")


def _decode_agg(t: Term) -> AggExpr:
    func = t.label[4:]
    arg = decode_expr(t.children[0]) if t.children else None
    return AggExpr(func, arg, t.payload)


def decode(t: Term):
    """Decode a term as a plan, expression, or leaf reference name."""
    s = label_sort(t.label, t.payload)
    if s == PLAN:
        return decode_plan(t)
    if s == TREF:
        return t.payload
    return decode_expr(t)
