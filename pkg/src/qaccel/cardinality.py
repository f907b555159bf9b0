"""Textbook cardinality heuristics.

Estimates feed the transfer and residual-time models only; correctness never
depends on them.  Rules: equality selects 1/distinct, ranges select 1/3,
conjunctions multiply, equi-joins produce |L|*|R|/max(distinct keys).
"""

from __future__ import annotations

import math

from .errors import QaccelError
from .plan import (AcceleratorCall, And, Between, ColumnRef, Compare, Filter,
                   GroupByAgg, InnerJoin, IsNull, LeftJoin, Like, Limit,
                   Literal, LogicalPlan, Not, Or, Project, ScalarExpr, Scan,
                   Sort, expr_columns)
from .types import Catalog

RANGE_SELECTIVITY = 1.0 / 3.0
LIKE_SELECTIVITY = 0.25
NULL_SELECTIVITY = 0.1
DEFAULT_SELECTIVITY = 1.0 / 3.0


def _column_distinct(name: str, catalog: Catalog, fallback_rows: float) -> float:
    for t in catalog.tables.values():
        for c in t.columns:
            if c.name == name and c.distinct:
                return float(c.distinct)
    return max(math.sqrt(max(fallback_rows, 1.0)), 1.0)


def _column_meta(name: str, catalog: Catalog):
    for t in catalog.tables.values():
        for c in t.columns:
            if c.name == name:
                return c
    return None


def _payload_number(lit, col_meta) -> float | None:
    """Literal expressed in the column's payload space (quantiles live
    there: decimals are scaled integers)."""
    from .types import Kind
    if not isinstance(lit, Literal) or lit.value is None \
            or isinstance(lit.value, (str, bool)):
        return None
    value = float(lit.value)
    if lit.ctype.kind == Kind.DECIMAL:
        value /= 10 ** lit.ctype.scale
    if col_meta.ctype.kind == Kind.DECIMAL:
        value *= 10 ** col_meta.ctype.scale
    return value


def _fraction_below(quantiles, v: float) -> float:
    """Share of rows with value <= v, interpolated on the quantile grid."""
    if v <= quantiles[0]:
        return 0.0
    if v >= quantiles[-1]:
        return 1.0
    steps = len(quantiles) - 1
    for i in range(steps):
        lo, hi = quantiles[i], quantiles[i + 1]
        if lo <= v <= hi:
            within = 0.5 if hi == lo else (v - lo) / (hi - lo)
            return (i + within) / steps
    return 0.5


def _range_selectivity(op: str, col: str, lit, catalog: Catalog):
    """Quantile-grid estimate for a one-sided range; None falls back."""
    meta = _column_meta(col, catalog)
    if meta is None or not meta.quantiles:
        return None
    v = _payload_number(lit, meta)
    if v is None:
        return None
    below = _fraction_below(meta.quantiles, v)
    if op in ("<", "<="):
        return below
    return 1.0 - below


def selectivity(pred: ScalarExpr, catalog: Catalog, input_rows: float) -> float:
    if isinstance(pred, Literal):
        if pred.value is True:
            return 1.0
        return 0.0
    if isinstance(pred, And):
        return (selectivity(pred.left, catalog, input_rows)
                * selectivity(pred.right, catalog, input_rows))
    if isinstance(pred, Or):
        s1 = selectivity(pred.left, catalog, input_rows)
        s2 = selectivity(pred.right, catalog, input_rows)
        return min(1.0, s1 + s2 - s1 * s2)
    if isinstance(pred, Not):
        return max(0.0, 1.0 - selectivity(pred.expr, catalog, input_rows))
    if isinstance(pred, Compare):
        if pred.op == "=":
            cols = expr_columns(pred.left) | expr_columns(pred.right)
            if cols:
                d = max(_column_distinct(c, catalog, input_rows) for c in cols)
                return 1.0 / d
            return DEFAULT_SELECTIVITY
        if pred.op == "<>":
            return 1.0 - selectivity(Compare("=", pred.left, pred.right),
                                     catalog, input_rows)
        sides = None
        if isinstance(pred.left, ColumnRef) and isinstance(pred.right, Literal):
            sides = (pred.op, pred.left.name, pred.right)
        elif isinstance(pred.right, ColumnRef) and isinstance(pred.left, Literal):
            flip = {"<": ">", "<=": ">=", ">": "<", ">=": "<="}
            sides = (flip[pred.op], pred.right.name, pred.left)
        if sides is not None:
            est = _range_selectivity(*sides, catalog)
            if est is not None:
                return min(1.0, max(0.0, est))
        return RANGE_SELECTIVITY
    if isinstance(pred, Between):
        if isinstance(pred.expr, ColumnRef):
            lo = _range_selectivity(">=", pred.expr.name, pred.low, catalog)
            hi = _range_selectivity("<=", pred.expr.name, pred.high, catalog)
            if lo is not None and hi is not None:
                return min(1.0, max(0.0, lo + hi - 1.0))
        return RANGE_SELECTIVITY
    if isinstance(pred, Like):
        return 1.0 - LIKE_SELECTIVITY if pred.negated else LIKE_SELECTIVITY
    if isinstance(pred, IsNull):
        return 1.0 - NULL_SELECTIVITY if pred.negated else NULL_SELECTIVITY
    return DEFAULT_SELECTIVITY


def _join_estimate(plan, catalog: Catalog, accel_cards) -> float:
    from .plan import split_conjuncts
    left = _estimate(plan.left, catalog, accel_cards)
    right = _estimate(plan.right, catalog, accel_cards)
    product = left * right
    est = product
    for c in split_conjuncts(plan.condition):
        if isinstance(c, Compare) and c.op == "=":
            cols = expr_columns(c.left) | expr_columns(c.right)
            if cols:
                d = max(_column_distinct(name, catalog, max(left, right))
                        for name in cols)
                est = est / max(d, 1.0)
                continue
        est *= selectivity(c, catalog, product)
    if isinstance(plan, LeftJoin):
        est = max(est, left)
    return est


def _estimate(plan: LogicalPlan, catalog: Catalog, accel_cards) -> float:
    if isinstance(plan, Scan):
        return float(max(catalog.table(plan.table).row_count, 0))
    if isinstance(plan, Filter):
        child = _estimate(plan.child, catalog, accel_cards)
        return child * selectivity(plan.predicate, catalog, child)
    if isinstance(plan, Project):
        return _estimate(plan.child, catalog, accel_cards)
    if isinstance(plan, (InnerJoin, LeftJoin)):
        return _join_estimate(plan, catalog, accel_cards)
    if isinstance(plan, GroupByAgg):
        child = _estimate(plan.child, catalog, accel_cards)
        if not plan.keys:
            return 1.0
        groups = 1.0
        for k in plan.keys:
            cols = expr_columns(k)
            if cols:
                groups *= max(_column_distinct(c, catalog, child) for c in cols)
            else:
                groups *= 1.0
        return min(child, groups)
    if isinstance(plan, Sort):
        return _estimate(plan.child, catalog, accel_cards)
    if isinstance(plan, Limit):
        return min(float(plan.n), _estimate(plan.child, catalog, accel_cards))
    if isinstance(plan, AcceleratorCall):
        if accel_cards and plan.call_id in accel_cards:
            return float(accel_cards[plan.call_id])
        return 1.0
    raise QaccelError(f"cannot estimate {plan!r}")


def estimate_cardinality(plan: LogicalPlan, catalog: Catalog,
                         accel_cards: dict | None = None) -> int:
    """Positive row-count estimate; never raises."""
    try:
        est = _estimate(plan, catalog, accel_cards)
    except Exception:
        rows = [t.row_count for t in catalog.tables.values()] or [1]
        est = float(max(rows))
    return max(1, int(math.ceil(est - 1e-9)))


def input_cardinality(plan: LogicalPlan, catalog: Catalog,
                      accel_cards: dict | None = None) -> int:
    """Total estimated rows entering the plan through its leaves."""
    total = 0
    from .plan import walk_plan
    for node in walk_plan(plan):
        if isinstance(node, Scan):
            total += max(catalog.table(node.table).row_count, 0)
        elif isinstance(node, AcceleratorCall) and not node.children:
            if accel_cards and node.call_id in accel_cards:
                total += int(accel_cards[node.call_id])
    return max(1, total)
