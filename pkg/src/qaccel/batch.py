"""In-memory columnar batches with per-column validity bitmaps.

Payload dtypes: int64 for int/date/decimal, float64 for real, object for
string, bool for boolean.  A null entry has its validity bit cleared and an
arbitrary payload slot that must never be read.
"""

from __future__ import annotations

import numpy as np

from .errors import QaccelError, UnknownColumn
from .types import Field, Kind

_DTYPES = {
    Kind.INT: np.int64,
    Kind.DATE: np.int64,
    Kind.DECIMAL: np.int64,
    Kind.REAL: np.float64,
    Kind.BOOL: np.bool_,
    Kind.STRING: object,
}


def payload_dtype(kind: str):
    return _DTYPES[kind]


def zeros_payload(kind: str, n: int) -> np.ndarray:
    if kind == Kind.STRING:
        arr = np.empty(n, dtype=object)
        arr[:] = ""
        return arr
    return np.zeros(n, dtype=_DTYPES[kind])


class ColumnarBatch:
    def __init__(self, schema: list[Field], columns: list[np.ndarray],
                 valid: list[np.ndarray], num_rows: int):
        if not (len(schema) == len(columns) == len(valid)):
            raise QaccelError("schema/columns/validity length mismatch")
        for f, c, v in zip(schema, columns, valid):
            if len(c) != num_rows or len(v) != num_rows:
                raise QaccelError(
                    f"column {f.name!r} length {len(c)}/{len(v)} != {num_rows}")
        self.schema = list(schema)
        self.columns = list(columns)
        self.valid = [np.asarray(v, dtype=bool) for v in valid]
        self.num_rows = num_rows

    # --- constructors ---

    @classmethod
    def empty(cls, schema: list[Field]) -> "ColumnarBatch":
        cols = [zeros_payload(f.ctype.kind, 0) for f in schema]
        vals = [np.zeros(0, dtype=bool) for _ in schema]
        return cls(schema, cols, vals, 0)

    @classmethod
    def from_pylists(cls, schema: list[Field], data: list[list]) -> "ColumnarBatch":
        """Build from per-column python lists; ``None`` marks a null."""
        if len(data) != len(schema):
            raise QaccelError("column count mismatch")
        n = len(data[0]) if data else 0
        cols, vals = [], []
        for f, values in zip(schema, data):
            if len(values) != n:
                raise QaccelError("ragged columns")
            v = np.array([x is not None for x in values], dtype=bool)
            payload = zeros_payload(f.ctype.kind, n)
            for i, x in enumerate(values):
                if x is not None:
                    payload[i] = x
            cols.append(payload)
            vals.append(v)
        return cls(schema, cols, vals, n)

    @classmethod
    def from_rows(cls, schema: list[Field], rows: list[tuple]) -> "ColumnarBatch":
        data = [[r[i] for r in rows] for i in range(len(schema))]
        if not rows:
            data = [[] for _ in schema]
        return cls.from_pylists(schema, data)

    # --- access ---

    def column_index(self, name: str) -> int:
        for i, f in enumerate(self.schema):
            if f.name == name:
                return i
        raise UnknownColumn(f"no column {name!r} in batch")

    def column(self, name: str):
        i = self.column_index(name)
        return self.columns[i], self.valid[i]

    def take(self, indices) -> "ColumnarBatch":
        indices = np.asarray(indices)
        cols = [c[indices] for c in self.columns]
        vals = [v[indices] for v in self.valid]
        return ColumnarBatch(self.schema, cols, vals, len(indices))

    def mask(self, keep: np.ndarray) -> "ColumnarBatch":
        return self.take(np.nonzero(keep)[0])

    def head(self, n: int) -> "ColumnarBatch":
        n = min(n, self.num_rows)
        return self.take(np.arange(n))

    def rename(self, names: list[str]) -> "ColumnarBatch":
        schema = [Field(n, f.ctype, f.nullable) for n, f in zip(names, self.schema)]
        return ColumnarBatch(schema, self.columns, self.valid, self.num_rows)

    # --- conversion ---

    def cell(self, row: int, col: int):
        if not self.valid[col][row]:
            return None
        x = self.columns[col][row]
        kind = self.schema[col].ctype.kind
        if kind in (Kind.INT, Kind.DATE, Kind.DECIMAL):
            return int(x)
        if kind == Kind.REAL:
            return float(x)
        if kind == Kind.BOOL:
            return bool(x)
        return x

    def to_rows(self) -> list[tuple]:
        return [tuple(self.cell(r, c) for c in range(len(self.schema)))
                for r in range(self.num_rows)]

    def payload_bytes(self) -> int:
        """Approximate in-memory payload size, counting string contents."""
        total = 0
        for f, c, v in zip(self.schema, self.columns, self.valid):
            if f.ctype.kind == Kind.STRING:
                total += sum(len(s) for s, ok in zip(c, v) if ok)
                total += 8 * len(c)
            else:
                total += c.nbytes
            total += len(v)  # one byte per validity flag
        return total

    def __repr__(self):
        return f"ColumnarBatch({self.num_rows} rows, {[f.name for f in self.schema]})"


def sort_keys_for(batch: ColumnarBatch, nulls_first: bool = True):
    """Key arrays for a canonical lexicographic ordering, most significant first.

    String payloads are factorized to integer codes because np.lexsort does
    not accept object arrays.
    """
    keys = []
    for f, col, val in zip(batch.schema, batch.columns, batch.valid):
        if f.ctype.kind == Kind.STRING:
            filled = np.array([s if ok else "" for s, ok in zip(col, val)],
                              dtype=object)
            _, payload = np.unique(filled, return_inverse=True)
        elif f.ctype.kind == Kind.BOOL:
            payload = np.where(val, col, False).astype(np.int64)
        else:
            payload = np.where(val, col, 0)
        nullkey = np.where(val, 1, 0) if nulls_first else np.where(val, 0, 1)
        keys.append(nullkey)
        keys.append(payload)
    return keys


def canonical_order(batch: ColumnarBatch, nulls_first: bool = True) -> ColumnarBatch:
    """Rows sorted lexicographically over all columns, nulls first by default."""
    if batch.num_rows <= 1:
        return batch
    keys = sort_keys_for(batch, nulls_first)
    order = np.lexsort(tuple(reversed(keys)))  # lexsort's last key is primary
    return batch.take(order)


def batches_equal(a: ColumnarBatch, b: ColumnarBatch, *, ordered: bool = False,
                  float_rtol: float = 0.0) -> bool:
    """Compare contents; by default as multisets via canonical ordering."""
    if len(a.schema) != len(b.schema) or a.num_rows != b.num_rows:
        return False
    for fa, fb in zip(a.schema, b.schema):
        if fa.ctype != fb.ctype:
            return False
    if not ordered:
        a = canonical_order(a)
        b = canonical_order(b)
    for f, ca, va, cb, vb in zip(a.schema, a.columns, a.valid, b.columns, b.valid):
        if not np.array_equal(va, vb):
            return False
        if f.ctype.kind == Kind.STRING:
            for x, y, ok in zip(ca, cb, va):
                if ok and x != y:
                    return False
        elif f.ctype.kind == Kind.REAL and float_rtol > 0:
            xa, xb = ca[va], cb[vb]
            if not np.allclose(xa, xb, rtol=float_rtol, atol=1e-300, equal_nan=True):
                return False
        else:
            if not np.array_equal(ca[va], cb[vb]):
                return False
    return True
