"""Shared helpers for the built-in accelerators: sargable-range extraction,
cross-batch key alignment, and aggregate batteries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..batch import ColumnarBatch
from ..plan import (And, Between, ColumnRef, Compare, Literal,
                    ScalarExpr, split_conjuncts)
from ..types import ColumnType, Kind

_FLIP = {"<": ">", "<=": ">=", ">": "<", ">=": "<=", "=": "="}


@dataclass
class RangeSpec:
    """A one-column range predicate: bounds are Literal values or None."""
    column: str
    lo: Literal | None = None
    lo_inclusive: bool = True
    hi: Literal | None = None
    hi_inclusive: bool = True

    def empty_hint(self) -> bool:
        if self.lo is None or self.hi is None:
            return False
        try:
            return self.lo.value is not None and self.hi.value is not None \
                and float(_as_number(self.lo)) > float(_as_number(self.hi))
        except (TypeError, ValueError):
            return False


def _as_number(lit: Literal):
    if lit.ctype.kind == Kind.DECIMAL:
        return lit.value / (10 ** lit.ctype.scale)
    return lit.value


def _bound_from_compare(op: str, col: str, lit: Literal):
    spec = RangeSpec(col)
    if op == "=":
        spec.lo = spec.hi = lit
    elif op == ">":
        spec.lo, spec.lo_inclusive = lit, False
    elif op == ">=":
        spec.lo = lit
    elif op == "<":
        spec.hi, spec.hi_inclusive = lit, False
    elif op == "<=":
        spec.hi = lit
    else:
        return None
    return spec


def _merge(a: RangeSpec, b: RangeSpec):
    if a.column != b.column:
        return None
    out = RangeSpec(a.column, a.lo, a.lo_inclusive, a.hi, a.hi_inclusive)
    for lo, incl in ((b.lo, b.lo_inclusive),):
        if lo is not None:
            if out.lo is not None:
                return None  # two lower bounds: keep it simple, reject
            out.lo, out.lo_inclusive = lo, incl
    if b.hi is not None:
        if out.hi is not None:
            return None
        out.hi, out.hi_inclusive = b.hi, b.hi_inclusive
    return out


def extract_range(pred: ScalarExpr) -> RangeSpec | None:
    """Recognize single-column sargable predicates: comparisons against
    literals, BETWEEN, and conjunctions of one lower and one upper bound."""
    if isinstance(pred, Between):
        if isinstance(pred.expr, ColumnRef) and isinstance(pred.low, Literal) \
                and isinstance(pred.high, Literal):
            return RangeSpec(pred.expr.name, pred.low, True, pred.high, True)
        return None
    if isinstance(pred, Compare):
        if isinstance(pred.left, ColumnRef) and isinstance(pred.right, Literal):
            return _bound_from_compare(pred.op, pred.left.name, pred.right)
        if isinstance(pred.right, ColumnRef) and isinstance(pred.left, Literal):
            return _bound_from_compare(_FLIP.get(pred.op, pred.op),
                                       pred.right.name, pred.left)
        return None
    if isinstance(pred, And):
        parts = split_conjuncts(pred)
        specs = [extract_range(p) for p in parts]
        if any(s is None for s in specs):
            return None
        out = specs[0]
        for s in specs[1:]:
            out = _merge(out, s)
            if out is None:
                return None
        return out
    return None


def bound_payload(lit: Literal, col_type: ColumnType):
    """Literal value expressed in the column's payload space.

    Exact rational arithmetic: dividing by the literal scale and multiplying
    by the column scale in floats would perturb equality bounds.
    """
    if lit.value is None:
        return None
    k = col_type.kind
    if k == Kind.STRING:
        return lit.value if isinstance(lit.value, str) else str(lit.value)
    if k == Kind.REAL:
        return float(_as_number(lit))
    from fractions import Fraction
    col_scale = col_type.scale if k == Kind.DECIMAL else 0
    if isinstance(lit.value, float):
        value = Fraction(lit.value).limit_denominator(10 ** 12)
    else:
        value = Fraction(int(lit.value))
    lit_scale = lit.ctype.scale if lit.ctype.kind == Kind.DECIMAL else 0
    payload = value * Fraction(10 ** col_scale, 10 ** lit_scale)
    if payload.denominator == 1:
        return int(payload)
    return float(payload)


def range_to_sides(spec: RangeSpec, col_type: ColumnType):
    """(lo_value, lo_side, hi_value, hi_side) for np.searchsorted slicing.

    None bounds clamp to the domain edges (not an error).
    """
    lo = bound_payload(spec.lo, col_type) if spec.lo is not None else None
    hi = bound_payload(spec.hi, col_type) if spec.hi is not None else None
    lo_side = "left" if spec.lo_inclusive else "right"
    hi_side = "right" if spec.hi_inclusive else "left"
    return lo, lo_side, hi, hi_side


def slice_sorted(values: np.ndarray, spec: RangeSpec, col_type: ColumnType):
    """Index range [a, b) of a sorted array selected by the range spec."""
    lo, lo_side, hi, hi_side = range_to_sides(spec, col_type)
    a = 0 if lo is None else int(np.searchsorted(values, lo, side=lo_side))
    b = len(values) if hi is None else int(np.searchsorted(values, hi,
                                                           side=hi_side))
    return a, max(a, b)


def joint_key_codes(cols_a: list, cols_b: list):
    """Dense codes for multi-column keys, shared across two batches so equal
    key tuples get equal codes; nulls are real key values here."""
    n_a = len(cols_a[0][0]) if cols_a else 0
    n_b = len(cols_b[0][0]) if cols_b else 0
    codes_a = np.zeros(n_a, dtype=np.int64)
    codes_b = np.zeros(n_b, dtype=np.int64)
    for (pa, va), (pb, vb) in zip(cols_a, cols_b):
        if pa.dtype == object or pb.dtype == object:
            filled = np.concatenate([
                np.array([x if ok else "" for x, ok in zip(pa, va)], dtype=object),
                np.array([x if ok else "" for x, ok in zip(pb, vb)], dtype=object)])
        else:
            filled = np.concatenate([np.where(va, pa, pa.dtype.type(0)),
                                     np.where(vb, pb, pb.dtype.type(0))])
        _, inv = np.unique(filled, return_inverse=True)
        inv = inv.astype(np.int64) + 1
        nullmask = np.concatenate([~va, ~vb])
        inv[nullmask] = 0
        k = int(inv.max()) + 1 if len(inv) else 1
        codes_a = codes_a * k + inv[:n_a]
        codes_b = codes_b * k + inv[n_a:]
    return codes_a, codes_b


def align_by_key(codes_t: np.ndarray, codes_n: np.ndarray):
    """For each row of t, the matching row index in n or -1."""
    if len(codes_n) == 0:
        return -np.ones(len(codes_t), dtype=np.int64)
    order = np.argsort(codes_n, kind="stable")
    snd = codes_n[order]
    pos = np.searchsorted(snd, codes_t)
    ok = pos < len(snd)
    safe = np.where(ok, pos, 0)
    ok &= snd[safe] == codes_t
    return np.where(ok, order[safe], -1)


def key_columns(batch: ColumnarBatch, names: list[str]):
    out = []
    for n in names:
        p, v = batch.column(n)
        out.append((p, v))
    return out
