"""Row-at-a-time nested-loop evaluator used as an independent test oracle.

Completely separate evaluation strategy from the package's vectorized
executor: python rows, None for null, exact Fractions for decimals, and
literal nested loops for joins.  Slow on purpose.
"""

from __future__ import annotations

import re
from fractions import Fraction

from qaccel.plan import (And, Arith, Between, ColumnRef, Compare, Filter,
                         GroupByAgg, InnerJoin, IsNull, LeftJoin, Like, Limit,
                         Literal, Not, Or, Project, Scan, Sort)
from qaccel.types import Kind


def _like_regex(pattern):
    out = []
    for ch in pattern:
        if ch == "%":
            out.append(".*")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    return re.compile("".join(out), re.DOTALL)


def table_rows(store, name):
    """Rows with decimal cells converted to exact Fractions."""
    batch = store.get(name)
    rows = []
    for r in range(batch.num_rows):
        row = []
        for c, f in enumerate(batch.schema):
            v = batch.cell(r, c)
            if v is not None and f.ctype.kind == Kind.DECIMAL:
                v = Fraction(v, 10 ** f.ctype.scale)
            row.append(v)
        rows.append(row)
    return rows, [f.name for f in batch.schema]


def eval_expr(e, row, names):
    if isinstance(e, ColumnRef):
        return row[names.index(e.name)]
    if isinstance(e, Literal):
        if e.value is None:
            return None
        if e.ctype.kind == Kind.DECIMAL:
            return Fraction(e.value, 10 ** e.ctype.scale)
        return e.value
    if isinstance(e, Arith):
        l = eval_expr(e.left, row, names)
        r = eval_expr(e.right, row, names)
        if l is None or r is None:
            return None
        if e.op == "/":
            if r == 0:
                return None
            if isinstance(l, Fraction) or isinstance(r, Fraction):
                return float(Fraction(l) / Fraction(r)) if isinstance(l, float) \
                    or isinstance(r, float) else Fraction(l) / Fraction(r)
            return l / r
        if e.op == "+":
            return l + r
        if e.op == "-":
            return l - r
        return l * r
    if isinstance(e, Compare):
        l = eval_expr(e.left, row, names)
        r = eval_expr(e.right, row, names)
        if l is None or r is None:
            return None
        return {"=": l == r, "<>": l != r, "<": l < r, "<=": l <= r,
                ">": l > r, ">=": l >= r}[e.op]
    if isinstance(e, Between):
        v = eval_expr(e.expr, row, names)
        lo = eval_expr(e.low, row, names)
        hi = eval_expr(e.high, row, names)
        a = None if (v is None or lo is None) else v >= lo
        b = None if (v is None or hi is None) else v <= hi
        return _and3(a, b)
    if isinstance(e, Like):
        v = eval_expr(e.expr, row, names)
        if v is None:
            return None
        hit = _like_regex(e.pattern).fullmatch(v) is not None
        return (not hit) if e.negated else hit
    if isinstance(e, IsNull):
        v = eval_expr(e.expr, row, names)
        return (v is not None) if e.negated else (v is None)
    if isinstance(e, And):
        return _and3(eval_expr(e.left, row, names),
                     eval_expr(e.right, row, names))
    if isinstance(e, Or):
        return _or3(eval_expr(e.left, row, names),
                    eval_expr(e.right, row, names))
    if isinstance(e, Not):
        v = eval_expr(e.expr, row, names)
        return None if v is None else (not v)
    raise AssertionError(f"oracle cannot evaluate {e!r}")


def _and3(a, b):
    if a is False or b is False:
        return False
    if a is None or b is None:
        return None
    return True


def _or3(a, b):
    if a is True or b is True:
        return True
    if a is None or b is None:
        return None
    return False


def run(plan, store):
    """Returns (rows, column names)."""
    if isinstance(plan, Scan):
        return table_rows(store, plan.table)
    if isinstance(plan, Filter):
        rows, names = run(plan.child, store)
        return [r for r in rows
                if eval_expr(plan.predicate, r, names) is True], names
    if isinstance(plan, Project):
        rows, names = run(plan.child, store)
        out = [[eval_expr(e, r, names) for e in plan.exprs] for r in rows]
        return out, list(plan.aliases)
    if isinstance(plan, InnerJoin):
        lrows, lnames = run(plan.left, store)
        rrows, rnames = run(plan.right, store)
        names = lnames + rnames
        out = []
        for lr in lrows:
            for rr in rrows:
                row = lr + rr
                if eval_expr(plan.condition, row, names) is True:
                    out.append(row)
        return out, names
    if isinstance(plan, LeftJoin):
        lrows, lnames = run(plan.left, store)
        rrows, rnames = run(plan.right, store)
        names = lnames + rnames
        out = []
        for lr in lrows:
            hit = False
            for rr in rrows:
                row = lr + rr
                if eval_expr(plan.condition, row, names) is True:
                    out.append(row)
                    hit = True
            if not hit:
                out.append(lr + [None] * len(rnames))
        return out, names
    if isinstance(plan, GroupByAgg):
        rows, names = run(plan.child, store)
        groups = {}
        order = []
        for r in rows:
            key = tuple(eval_expr(k, r, names) for k in plan.keys)
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(r)
        if not plan.keys and not rows:
            groups[()] = []
            order.append(())
        out = []
        for key in order:
            members = groups[key]
            row = list(key)
            for a in plan.aggs:
                if a.func == "count_star":
                    row.append(len(members))
                    continue
                vals = [eval_expr(a.arg, m, names) for m in members]
                vals = [v for v in vals if v is not None]
                if a.func == "count":
                    row.append(len(vals))
                elif not vals:
                    row.append(None)
                elif a.func == "sum":
                    row.append(sum(vals))
                elif a.func == "avg":
                    row.append(float(sum(Fraction(v) if not isinstance(v, float)
                                         else Fraction.from_float(v)
                                         for v in vals) / len(vals)))
                elif a.func == "min":
                    row.append(min(vals))
                else:
                    row.append(max(vals))
            out.append(row)
        return out, list(plan.key_names) + [a.alias for a in plan.aggs]
    if isinstance(plan, Sort):
        rows, names = run(plan.child, store)
        return _stable_multisort(rows, names, plan), names
    if isinstance(plan, Limit):
        rows, names = run(plan.child, store)
        return rows[:plan.n], names
    raise AssertionError(f"oracle cannot run {plan!r}")


def _stable_multisort(rows, names, plan):
    out = list(rows)
    for e, asc, nf in reversed(list(zip(plan.keys, plan.ascending,
                                        plan.nulls_first))):
        present = [r for r in out if eval_expr(e, r, names) is not None]
        absent = [r for r in out if eval_expr(e, r, names) is None]
        present.sort(key=lambda r: _norm(eval_expr(e, r, names)),
                     reverse=not asc)
        out = absent + present if nf else present + absent
    return out


def _norm(v):
    if isinstance(v, bool):
        return int(v)
    return v


def canonical(rows):
    """Multiset-comparable form: sorted with nulls first."""
    def key(r):
        return tuple((0, "") if v is None else (1, _rank(v)) for v in r)
    return sorted(rows, key=key)


def _rank(v):
    if isinstance(v, bool):
        return (0, int(v))
    if isinstance(v, (int, Fraction)) and not isinstance(v, bool):
        return (1, Fraction(v))
    if isinstance(v, float):
        return (1, Fraction.from_float(v))
    return (2, v)
