"""Reference executor: exact SQL semantics over columnar batches.

Evaluation is vectorized (numpy) but deliberately simple: every operator
materializes its full output.  Boolean expressions use three-valued logic,
carried as a (value, valid) array pair where valid=False means Unknown.
"""

from __future__ import annotations

import re

import numpy as np

from . import kernels
from .batch import ColumnarBatch, canonical_order, zeros_payload
from .errors import QaccelError, TypeMismatch
from .plan import (AcceleratorCall, And, Arith, Between, ColumnRef, Compare,
                   Filter, GroupByAgg, InnerJoin, IsNull, LeftJoin, Like,
                   Limit, Literal, LogicalPlan, Not, Or, Project, ScalarExpr,
                   Scan, Sort, expr_columns, split_conjuncts)
from .schema import TypeEnv, agg_type, promote
from .store import DataStore
from .types import BOOL, REAL, ColumnType, Field, Kind


class Column:
    """A typed value vector with its validity mask."""

    __slots__ = ("payload", "valid", "ctype")

    def __init__(self, payload, valid, ctype: ColumnType):
        self.payload = payload
        self.valid = valid
        self.ctype = ctype


def _rescale(payload: np.ndarray, from_scale: int, to_scale: int) -> np.ndarray:
    if to_scale == from_scale:
        return payload
    return payload * (10 ** (to_scale - from_scale))


def _as_float(col: Column) -> np.ndarray:
    if col.ctype.kind == Kind.DECIMAL:
        return col.payload.astype(np.float64) / (10.0 ** col.ctype.scale)
    return col.payload.astype(np.float64)


def _align_numeric(l: Column, r: Column):
    """Bring two numeric/date columns onto a common comparable payload."""
    if Kind.REAL in (l.ctype.kind, r.ctype.kind):
        return _as_float(l), _as_float(r)
    if Kind.DECIMAL in (l.ctype.kind, r.ctype.kind):
        ls = l.ctype.scale if l.ctype.kind == Kind.DECIMAL else 0
        rs = r.ctype.scale if r.ctype.kind == Kind.DECIMAL else 0
        s = max(ls, rs)
        return _rescale(l.payload, ls, s), _rescale(r.payload, rs, s)
    return l.payload, r.payload


def like_to_regex(pattern: str) -> re.Pattern:
    """Anchored-as-needed non-greedy translation; '%' edges drop anchors so
    the matcher can scan instead of backtracking over a leading '.*'."""
    out = []
    if not pattern.startswith("%"):
        out.append("^")
    for ch in pattern:
        if ch == "%":
            out.append(".*?")
        elif ch == "_":
            out.append(".")
        else:
            out.append(re.escape(ch))
    body = "".join(out)
    if not pattern.endswith("%"):
        body += "$"
    # collapse the anchor-adjacent wildcards the edge trimming left behind
    if pattern.startswith("%"):
        body = body[3:] if body.startswith(".*?") else body
    if pattern.endswith("%") and body.endswith(".*?"):
        body = body[:-3]
    return re.compile(body, re.DOTALL)


def _like_segments(pattern: str):
    """Literal segments for pure substring patterns like '%a%b%'; None when
    the pattern needs the general matcher."""
    if "_" in pattern:
        return None
    if not (pattern.startswith("%") and pattern.endswith("%")):
        return None
    segs = [s for s in pattern.split("%") if s]
    return segs


def like_match_all(pattern: str, payload, valid) -> np.ndarray:
    """Boolean hits for a LIKE pattern over an object column."""
    res = np.zeros(len(payload), dtype=bool)
    idx = np.nonzero(valid)[0]
    segs = _like_segments(pattern)
    if segs is not None:
        for i in idx:
            s = payload[i]
            pos = 0
            ok = True
            for seg in segs:
                pos = s.find(seg, pos)
                if pos < 0:
                    ok = False
                    break
                pos += len(seg)
            res[i] = ok
        return res
    rx = like_to_regex(pattern)
    for i in idx:
        res[i] = rx.search(payload[i]) is not None
    return res


class Evaluator:
    """Expression evaluation against one batch."""

    def __init__(self, batch: ColumnarBatch):
        self.batch = batch
        self.env = TypeEnv(batch.schema)
        self.n = batch.num_rows

    def eval(self, e: ScalarExpr) -> Column:
        if isinstance(e, ColumnRef):
            i = self.batch.column_index(e.name)
            return Column(self.batch.columns[i], self.batch.valid[i],
                          self.batch.schema[i].ctype)
        if isinstance(e, Literal):
            if e.value is None:
                return Column(zeros_payload(e.ctype.kind, self.n),
                              np.zeros(self.n, dtype=bool), e.ctype)
            payload = zeros_payload(e.ctype.kind, self.n)
            payload[:] = e.value
            return Column(payload, np.ones(self.n, dtype=bool), e.ctype)
        if isinstance(e, Arith):
            return self._arith(e)
        if isinstance(e, Compare):
            return self._compare(e.op, self.eval(e.left), self.eval(e.right))
        if isinstance(e, Between):
            v = self.eval(e.expr)
            lo = self._compare(">=", v, self.eval(e.low))
            hi = self._compare("<=", v, self.eval(e.high))
            return self._and(lo, hi)
        if isinstance(e, Like):
            return self._like(e)
        if isinstance(e, IsNull):
            v = self.eval(e.expr)
            val = v.valid.copy() if e.negated else ~v.valid
            return Column(val, np.ones(self.n, dtype=bool), BOOL)
        if isinstance(e, And):
            return self._and(self.eval(e.left), self.eval(e.right))
        if isinstance(e, Or):
            return self._or(self.eval(e.left), self.eval(e.right))
        if isinstance(e, Not):
            v = self.eval(e.expr)
            return Column(~v.payload.astype(bool), v.valid, BOOL)
        raise QaccelError(f"cannot evaluate {e!r}")

    # --- pieces ---

    def _arith(self, e: Arith) -> Column:
        l, r = self.eval(e.left), self.eval(e.right)
        out_t = promote(l.ctype, r.ctype, e.op)
        valid = l.valid & r.valid
        if e.op == "/":
            lf, rf = _as_float(l), _as_float(r)
            valid = valid & (rf != 0)
            payload = np.divide(lf, rf, out=np.zeros(self.n), where=valid)
            return Column(payload, valid, REAL)
        if out_t.kind == Kind.REAL:
            lf, rf = _as_float(l), _as_float(r)
            payload = {"+": np.add, "-": np.subtract, "*": np.multiply}[e.op](lf, rf)
            return Column(payload, valid, out_t)
        if out_t.kind == Kind.DECIMAL and e.op == "*":
            return Column(l.payload * r.payload, valid, out_t)
        if out_t.kind == Kind.DECIMAL:
            ls = l.ctype.scale if l.ctype.kind == Kind.DECIMAL else 0
            rs = r.ctype.scale if r.ctype.kind == Kind.DECIMAL else 0
            lp = _rescale(l.payload, ls, out_t.scale)
            rp = _rescale(r.payload, rs, out_t.scale)
            payload = lp + rp if e.op == "+" else lp - rp
            return Column(payload, valid, out_t)
        payload = {"+": np.add, "-": np.subtract, "*": np.multiply}[e.op](
            l.payload, r.payload)
        return Column(payload, valid, out_t)

    def _compare(self, op: str, l: Column, r: Column) -> Column:
        valid = l.valid & r.valid
        if l.ctype.kind == Kind.STRING:
            lp = np.asarray(l.payload, dtype=object)
            rp = np.asarray(r.payload, dtype=object)
            # object-array comparisons degrade to python; mask first for speed
            idx = np.nonzero(valid)[0]
            res = np.zeros(self.n, dtype=bool)
            fn = {"=": lambda a, b: a == b, "<>": lambda a, b: a != b,
                  "<": lambda a, b: a < b, "<=": lambda a, b: a <= b,
                  ">": lambda a, b: a > b, ">=": lambda a, b: a >= b}[op]
            for i in idx:
                res[i] = fn(lp[i], rp[i])
            return Column(res, valid, BOOL)
        lp, rp = _align_numeric(l, r)
        fn = {"=": np.equal, "<>": np.not_equal, "<": np.less,
              "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal}[op]
        return Column(fn(lp, rp), valid, BOOL)

    def _like(self, e: Like) -> Column:
        v = self.eval(e.expr)
        if v.ctype.kind != Kind.STRING:
            raise TypeMismatch("LIKE requires a string operand")
        res = like_match_all(e.pattern, v.payload, v.valid)
        if e.negated:
            res = ~res
        return Column(res, v.valid.copy(), BOOL)

    def _and(self, l: Column, r: Column) -> Column:
        lv = l.payload.astype(bool)
        rv = r.payload.astype(bool)
        known_false = (l.valid & ~lv) | (r.valid & ~rv)
        known_true = l.valid & lv & r.valid & rv
        return Column(known_true, known_false | known_true, BOOL)

    def _or(self, l: Column, r: Column) -> Column:
        lv = l.payload.astype(bool)
        rv = r.payload.astype(bool)
        known_true = (l.valid & lv) | (r.valid & rv)
        known_false = l.valid & ~lv & r.valid & ~rv
        return Column(known_true, known_false | known_true, BOOL)


def eval_predicate(batch: ColumnarBatch, pred: ScalarExpr) -> np.ndarray:
    """Rows where the predicate is True (not False, not Unknown)."""
    col = Evaluator(batch).eval(pred)
    return col.payload.astype(bool) & col.valid


# ---------------------------------------------------------------------------
# joins
# ---------------------------------------------------------------------------

def _concat_batches(left: ColumnarBatch, right: ColumnarBatch,
                    li: np.ndarray, ri: np.ndarray,
                    right_nullable: bool = False) -> ColumnarBatch:
    schema = list(left.schema) + [
        Field(f.name, f.ctype, f.nullable or right_nullable)
        for f in right.schema]
    cols = [c[li] for c in left.columns] + [c[ri] for c in right.columns]
    vals = [v[li] for v in left.valid] + [v[ri] for v in right.valid]
    return ColumnarBatch(schema, cols, vals, len(li))


def _null_extend(left: ColumnarBatch, right_schema: list[Field],
                 li: np.ndarray) -> ColumnarBatch:
    n = len(li)
    schema = list(left.schema) + [Field(f.name, f.ctype, True)
                                  for f in right_schema]
    cols = [c[li] for c in left.columns]
    vals = [v[li] for v in left.valid]
    for f in right_schema:
        cols.append(zeros_payload(f.ctype.kind, n))
        vals.append(np.zeros(n, dtype=bool))
    return ColumnarBatch(schema, cols, vals, n)


def _key_codes(col: Column) -> np.ndarray:
    """Dense codes for join/group keys; nulls get code 0 (never matched)."""
    if col.ctype.kind == Kind.STRING:
        filled = np.array([s if ok else "" for s, ok in
                           zip(col.payload, col.valid)], dtype=object)
        _, inv = np.unique(filled, return_inverse=True)
    else:
        filled = np.where(col.valid, col.payload, col.payload.dtype.type(0))
        _, inv = np.unique(filled, return_inverse=True)
    return np.where(col.valid, inv.astype(np.int64) + 1, 0)


def _split_join_condition(cond: ScalarExpr, left_names: set,
                          right_names: set):
    """Partition a join condition into equi key pairs and residual conjuncts."""
    equi, residual = [], []
    for c in split_conjuncts(cond):
        if isinstance(c, Compare) and c.op == "=":
            lc, rc = expr_columns(c.left), expr_columns(c.right)
            if lc and rc:
                if lc <= left_names and rc <= right_names:
                    equi.append((c.left, c.right))
                    continue
                if lc <= right_names and rc <= left_names:
                    equi.append((c.right, c.left))
                    continue
        residual.append(c)
    return equi, residual


def _hash_join_pairs(left: ColumnarBatch, right: ColumnarBatch, equi):
    """Index pairs matching all equi conjuncts (null keys never match)."""
    lcodes = np.zeros(left.num_rows, dtype=np.int64)
    rcodes = np.zeros(right.num_rows, dtype=np.int64)
    lvalid = np.ones(left.num_rows, dtype=bool)
    rvalid = np.ones(right.num_rows, dtype=bool)
    for le, re_ in equi:
        lcol = Evaluator(left).eval(le)
        rcol = Evaluator(right).eval(re_)
        # joint code space so equal values share codes across the two sides
        if lcol.ctype.kind == Kind.STRING:
            both = np.concatenate([
                np.array([s if ok else "" for s, ok in zip(lcol.payload, lcol.valid)],
                         dtype=object),
                np.array([s if ok else "" for s, ok in zip(rcol.payload, rcol.valid)],
                         dtype=object)])
        else:
            lp, rp = _align_numeric(lcol, rcol)
            both = np.concatenate([np.where(lcol.valid, lp, lp.dtype.type(0)),
                                   np.where(rcol.valid, rp, rp.dtype.type(0))])
        _, inv = np.unique(both, return_inverse=True)
        inv = inv.astype(np.int64)
        k = int(inv.max()) + 2 if len(inv) else 2
        lcodes = lcodes * k + inv[:left.num_rows]
        rcodes = rcodes * k + inv[left.num_rows:]
        lvalid &= lcol.valid
        rvalid &= rcol.valid
    # send null keys to a code that exists on neither side
    lcodes = np.where(lvalid, lcodes, -1)
    rcodes = np.where(rvalid, rcodes, -2)
    order = np.argsort(rcodes, kind="stable")
    rsorted = rcodes[order]
    lo = np.searchsorted(rsorted, lcodes, side="left")
    hi = np.searchsorted(rsorted, lcodes, side="right")
    counts = hi - lo
    total = int(counts.sum())
    li = np.repeat(np.arange(left.num_rows), counts)
    starts = np.repeat(lo, counts)
    within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
    ri = order[starts + within]
    return li, ri


def _nested_loop_pairs(left: ColumnarBatch, right: ColumnarBatch):
    li = np.repeat(np.arange(left.num_rows), right.num_rows)
    ri = np.tile(np.arange(right.num_rows), left.num_rows)
    return li, ri


def _join(plan, left: ColumnarBatch, right: ColumnarBatch) -> ColumnarBatch:
    outer = isinstance(plan, LeftJoin)
    left_names = {f.name for f in left.schema}
    right_names = {f.name for f in right.schema}
    equi, residual = _split_join_condition(plan.condition, left_names, right_names)
    # push single-side conjuncts below the join, as any engine would;
    # for an outer join only the non-preserved (right) side is safe
    kept = []
    for c in residual:
        cols = expr_columns(c)
        if cols and cols <= right_names:
            right = right.mask(eval_predicate(right, c))
        elif not outer and cols and cols <= left_names:
            left = left.mask(eval_predicate(left, c))
        else:
            kept.append(c)
    residual = kept
    if equi:
        li, ri = _hash_join_pairs(left, right, equi)
    else:
        li, ri = _nested_loop_pairs(left, right)
    pairs = _concat_batches(left, right, li, ri, right_nullable=outer)
    if residual:
        keep = np.ones(pairs.num_rows, dtype=bool)
        for c in residual:
            keep &= eval_predicate(pairs, c)
        pairs = pairs.mask(keep)
        li = li[keep]
    if not outer:
        return pairs
    matched = np.zeros(left.num_rows, dtype=bool)
    matched[li] = True
    extension = _null_extend(left, right.schema, np.nonzero(~matched)[0])
    schema = pairs.schema
    cols = [np.concatenate([a, b]) if a.dtype != object else
            np.concatenate([np.asarray(a, object), np.asarray(b, object)])
            for a, b in zip(pairs.columns, extension.columns)]
    vals = [np.concatenate([a, b]) for a, b in zip(pairs.valid, extension.valid)]
    return ColumnarBatch(schema, cols, vals, pairs.num_rows + extension.num_rows)


# ---------------------------------------------------------------------------
# grouping
# ---------------------------------------------------------------------------

def group_ids(key_cols: list[Column], n_rows: int):
    """Dense group ids; SQL semantics (nulls form one group per key value)."""
    if not key_cols:
        return np.zeros(n_rows, dtype=np.int64), 1, np.zeros(1, dtype=np.int64)
    combined = np.zeros(n_rows, dtype=np.int64)
    for col in key_cols:
        codes = _key_codes(col)  # 0 stands for null here, a real group value
        k = int(codes.max()) + 1 if n_rows else 1
        combined = combined * k + codes
    uniq, first_idx, gids = np.unique(combined, return_index=True,
                                      return_inverse=True)
    return gids.astype(np.int64), len(uniq), first_idx


def _group_minmax_string(gids, n_groups, col: Column, want_max: bool):
    payload = np.empty(n_groups, dtype=object)
    payload[:] = ""
    valid = np.zeros(n_groups, dtype=bool)
    idx = np.nonzero(col.valid)[0]
    for i in idx:
        g = gids[i]
        v = col.payload[i]
        if not valid[g]:
            payload[g] = v
            valid[g] = True
        elif (v > payload[g]) if want_max else (v < payload[g]):
            payload[g] = v
    return payload, valid


def _group_by(plan: GroupByAgg, child: ColumnarBatch) -> ColumnarBatch:
    ev = Evaluator(child)
    key_cols = [ev.eval(k) for k in plan.keys]
    gids, n_groups, first_idx = group_ids(key_cols, child.num_rows)
    keyless = not plan.keys
    if not keyless and child.num_rows == 0:
        n_groups = 0

    env = TypeEnv(child.schema)
    out_schema, out_cols, out_vals = [], [], []
    for kc, name in zip(key_cols, plan.key_names):
        t, nullable = kc.ctype, bool((~kc.valid).any()) if child.num_rows else True
        out_schema.append(Field(name, t, nullable))
        out_cols.append(kc.payload[first_idx] if n_groups else
                        zeros_payload(t.kind, 0))
        out_vals.append(kc.valid[first_idx] if n_groups else
                        np.zeros(0, dtype=bool))

    # batch the numeric aggregates per payload dtype for the fused kernels
    int_specs, float_specs, results = [], [], {}
    agg_cols = {}
    for ai, a in enumerate(plan.aggs):
        if a.func == "count_star":
            continue
        agg_cols[ai] = ev.eval(a.arg)
    for ai, a in enumerate(plan.aggs):
        if a.func == "count_star":
            continue
        col = agg_cols[ai]
        if a.func == "count":
            # only validity matters; strings and such never hit the kernel
            stub = Column(np.zeros(child.num_rows, dtype=np.int64),
                          col.valid, ColumnType(Kind.INT))
            int_specs.append((ai, stub, kernels.OP_SUM, True))
            continue
        op = {"min": kernels.OP_MIN, "max": kernels.OP_MAX}.get(a.func, kernels.OP_SUM)
        if col.ctype.kind == Kind.STRING:
            results[ai] = _group_minmax_string(gids, n_groups, col, a.func == "max")
        elif col.ctype.kind == Kind.REAL:
            float_specs.append((ai, col, op, False))
        else:
            int_specs.append((ai, col, op, False))

    row_counts = np.bincount(gids, minlength=n_groups).astype(np.int64)

    kernel_gids = np.ascontiguousarray(gids, dtype=np.int64)

    def run_kernel(specs, dtype, fn):
        if not specs:
            return
        vals = np.ascontiguousarray(
            np.stack([np.where(c.valid, c.payload, c.payload.dtype.type(0))
                      .astype(dtype) for _, c, _, _ in specs]))
        valid = np.ascontiguousarray(
            np.stack([c.valid for _, c, _, _ in specs]).astype(np.uint8))
        ops = np.array([op for _, _, op, _ in specs], dtype=np.int32)
        out, nn, _ = fn(kernel_gids, n_groups, vals, valid, ops)
        for slot, (ai, col, op, is_count) in enumerate(specs):
            results[ai] = (out[slot], nn[slot], is_count)

    run_kernel(int_specs, np.int64, kernels.fused_group_agg_i64)
    run_kernel(float_specs, np.float64, kernels.fused_group_agg_f64)

    for ai, a in enumerate(plan.aggs):
        t, nullable = agg_type(a, env)
        out_schema.append(Field(a.alias, t, nullable))
        if a.func == "count_star":
            out_cols.append(row_counts.copy())
            out_vals.append(np.ones(n_groups, dtype=bool))
            continue
        res = results[ai]
        if a.func in ("min", "max") and agg_cols[ai].ctype.kind == Kind.STRING:
            payload, valid = res
            out_cols.append(payload)
            out_vals.append(valid)
            continue
        out, nn, is_count = res
        if a.func == "count":
            out_cols.append(nn.astype(np.int64))
            out_vals.append(np.ones(n_groups, dtype=bool))
        elif a.func == "avg":
            denom = np.maximum(nn, 1)
            if agg_cols[ai].ctype.kind == Kind.DECIMAL:
                scale = 10.0 ** agg_cols[ai].ctype.scale
                payload = out.astype(np.float64) / scale / denom
            else:
                payload = out.astype(np.float64) / denom
            out_cols.append(payload)
            out_vals.append(nn > 0)
        else:  # sum / min / max
            payload = out.astype(np.float64) if t.kind == Kind.REAL else out
            out_cols.append(payload)
            out_vals.append(nn > 0)

    return ColumnarBatch(out_schema, out_cols, out_vals, n_groups)


# ---------------------------------------------------------------------------
# sorting
# ---------------------------------------------------------------------------

def _sort(plan: Sort, child: ColumnarBatch) -> ColumnarBatch:
    if child.num_rows <= 1:
        return child
    ev = Evaluator(child)
    keys = []
    for e, asc, nf in zip(plan.keys, plan.ascending, plan.nulls_first):
        col = ev.eval(e)
        if col.ctype.kind == Kind.STRING:
            filled = np.array([s if ok else "" for s, ok in
                               zip(col.payload, col.valid)], dtype=object)
            _, payload = np.unique(filled, return_inverse=True)
            payload = payload.astype(np.int64)
        elif col.ctype.kind == Kind.BOOL:
            payload = np.where(col.valid, col.payload, False).astype(np.int64)
        else:
            payload = np.where(col.valid, col.payload, col.payload.dtype.type(0))
        if not asc:
            payload = -payload
        nullkey = np.where(col.valid, 1, 0) if nf else np.where(col.valid, 0, 1)
        keys.append(nullkey)
        keys.append(payload)
    order = np.lexsort(tuple(reversed(keys)))
    return child.take(order)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def execute_oracle(plan: LogicalPlan, store: DataStore) -> ColumnarBatch:
    """Run a plan to completion; accelerator calls are rejected."""
    if isinstance(plan, AcceleratorCall):
        raise QaccelError("the reference executor cannot run accelerator calls")
    if isinstance(plan, Scan):
        return store.get(plan.table)
    if isinstance(plan, Filter):
        child = execute_oracle(plan.child, store)
        return child.mask(eval_predicate(child, plan.predicate))
    if isinstance(plan, Project):
        child = execute_oracle(plan.child, store)
        ev = Evaluator(child)
        schema, cols, vals = [], [], []
        for e, name in zip(plan.exprs, plan.aliases):
            col = ev.eval(e)
            nullable = bool((~col.valid).any()) if child.num_rows else True
            schema.append(Field(name, col.ctype, nullable))
            cols.append(col.payload)
            vals.append(col.valid)
        return ColumnarBatch(schema, cols, vals, child.num_rows)
    if isinstance(plan, (InnerJoin, LeftJoin)):
        left = execute_oracle(plan.left, store)
        right = execute_oracle(plan.right, store)
        return _join(plan, left, right)
    if isinstance(plan, GroupByAgg):
        return _group_by(plan, execute_oracle(plan.child, store))
    if isinstance(plan, Sort):
        return _sort(plan, execute_oracle(plan.child, store))
    if isinstance(plan, Limit):
        return execute_oracle(plan.child, store).head(plan.n)
    raise QaccelError(f"cannot execute {plan!r}")


def execute_canonical(plan: LogicalPlan, store: DataStore) -> ColumnarBatch:
    return canonical_order(execute_oracle(plan, store))
