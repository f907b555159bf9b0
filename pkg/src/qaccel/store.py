"""In-memory columnar store loaded from CSV files, plus statistics.

CSV conventions: RFC-4180 quoting, header row required, ``\\N`` or an empty
unquoted field is null, dates are YYYY-MM-DD.
"""

from __future__ import annotations

import csv
import math

import numpy as np

from .batch import ColumnarBatch, zeros_payload
from .errors import ImportFailed, UnknownTable
from .types import Catalog, ColumnMeta, Kind, TableMeta, date_to_days

N_QUANTILES = 21


class DataStore:
    """Tables as columnar batches; also tracks temp tables and staleness."""

    def __init__(self, catalog: Catalog):
        self.catalog = catalog
        self.tables: dict[str, ColumnarBatch] = {}
        self.temp_names: set[str] = set()
        self.generation = 0  # bumped on every reload; stale-state checks use it

    def put(self, name: str, batch: ColumnarBatch):
        if not self.catalog.has_table(name):
            raise UnknownTable(f"table {name!r} not in catalog")
        self.tables[name] = batch
        meta = self.catalog.table(name)
        meta.row_count = batch.num_rows
        meta.avg_row_bytes = (batch.payload_bytes() / batch.num_rows
                              if batch.num_rows else 0.0)

    def get(self, name: str) -> ColumnarBatch:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTable(f"table {name!r} has no data loaded") from None

    def register_temp(self, name: str, batch: ColumnarBatch):
        meta = TableMeta(
            name=name,
            columns=[ColumnMeta(f.name, f.ctype, f.nullable) for f in batch.schema],
            row_count=batch.num_rows,
        )
        self.catalog.add_table(meta)
        self.tables[name] = batch
        self.temp_names.add(name)

    def drop_temp(self, name: str):
        if name in self.temp_names:
            self.catalog.drop_table(name)
            self.tables.pop(name, None)
            self.temp_names.discard(name)

    def reload(self, name: str, batch: ColumnarBatch):
        """Bulk-replace a table's contents; marks all accelerator state stale."""
        self.put(name, batch)
        self.generation += 1

    def total_payload_bytes(self) -> int:
        return sum(b.payload_bytes() for n, b in self.tables.items()
                   if n not in self.temp_names)


def _parse_cell(text: str | None, kind: str, scale: int):
    if text is None:
        return None
    if kind == Kind.INT:
        return int(text)
    if kind == Kind.REAL:
        return float(text)
    if kind == Kind.DECIMAL:
        sign = -1 if text.startswith("-") else 1
        body = text.lstrip("+-")
        if "." in body:
            whole, frac = body.split(".", 1)
        else:
            whole, frac = body, ""
        frac = (frac + "0" * scale)[:scale]
        return sign * (int(whole or "0") * 10 ** scale + int(frac or "0"))
    if kind == Kind.DATE:
        return date_to_days(text)
    if kind == Kind.BOOL:
        low = text.strip().lower()
        if low in ("true", "t", "1"):
            return True
        if low in ("false", "f", "0"):
            return False
        raise ImportFailed(f"bad boolean literal {text!r}")
    return text


def load_csv(path, meta: TableMeta) -> ColumnarBatch:
    """Load one table; nulls are ``\\N`` or empty fields."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ImportFailed(f"{path}: missing header row") from None
        names = [c.name for c in meta.columns]
        if [h.strip().lower() for h in header] != names:
            raise ImportFailed(
                f"{path}: header {header} does not match catalog columns {names}")
        raw_cols: list[list] = [[] for _ in meta.columns]
        for row in reader:
            if len(row) != len(meta.columns):
                raise ImportFailed(f"{path}: row width {len(row)} != {len(meta.columns)}")
            for i, (cell, col) in enumerate(zip(row, meta.columns)):
                if cell == "\\N" or cell == "":
                    raw_cols[i].append(None)
                else:
                    raw_cols[i].append(_parse_cell(cell, col.ctype.kind, col.ctype.scale))
    n = len(raw_cols[0]) if raw_cols else 0
    cols, vals = [], []
    for col, raw in zip(meta.columns, raw_cols):
        valid = np.array([x is not None for x in raw], dtype=bool)
        payload = zeros_payload(col.ctype.kind, n)
        for i, x in enumerate(raw):
            if x is not None:
                payload[i] = x
        cols.append(payload)
        vals.append(valid)
    return ColumnarBatch([c.as_field() for c in meta.columns], cols, vals, n)


def write_csv(path, batch: ColumnarBatch):
    from .types import days_to_date
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([fld.name for fld in batch.schema])
        for row in batch.to_rows():
            out = []
            for x, fld in zip(row, batch.schema):
                if x is None:
                    out.append("\\N")
                elif fld.ctype.kind == Kind.DATE:
                    out.append(days_to_date(x))
                elif fld.ctype.kind == Kind.DECIMAL:
                    s = fld.ctype.scale
                    sign = "-" if x < 0 else ""
                    mag = abs(x)
                    out.append(f"{sign}{mag // 10**s}.{mag % 10**s:0{s}d}" if s else str(x))
                elif fld.ctype.kind == Kind.BOOL:
                    out.append("true" if x else "false")
                else:
                    out.append(str(x))
            writer.writerow(out)


def compute_stats(store: DataStore, table: str):
    """Fill distinct counts, min/max, and a quantile grid on the catalog."""
    meta = store.catalog.table(table)
    batch = store.get(table)
    for i, col in enumerate(meta.columns):
        payload, valid = batch.columns[i], batch.valid[i]
        present = payload[valid]
        if len(present) == 0:
            col.distinct = 0
            col.quantiles = None
            continue
        if col.ctype.kind == Kind.STRING:
            uniq = np.unique(np.array(list(present), dtype=object))
            col.distinct = int(len(uniq))
            col.min_value = str(uniq[0])
            col.max_value = str(uniq[-1])
            col.quantiles = None  # range predicates over strings are rare
        else:
            uniq = np.unique(present)
            col.distinct = int(len(uniq))
            qs = np.quantile(present.astype(np.float64),
                             np.linspace(0.0, 1.0, N_QUANTILES))
            if col.ctype.kind != Kind.REAL:
                qs = np.round(qs)
            col.quantiles = [float(q) for q in qs]
            col.min_value = _pyval(present.min(), col.ctype.kind)
            col.max_value = _pyval(present.max(), col.ctype.kind)
        col.nullable = bool((~valid).any()) or col.nullable


def _pyval(x, kind):
    if kind == Kind.REAL:
        return float(x)
    if kind == Kind.BOOL:
        return bool(x)
    return int(x)


def load_store(catalog: Catalog, data_dir) -> DataStore:
    """Load every catalog table from ``<data_dir>/<table>.csv`` and compute stats."""
    import os
    store = DataStore(catalog)
    for name in catalog.tables:
        path = os.path.join(data_dir, f"{name}.csv")
        if not os.path.exists(path):
            raise ImportFailed(f"no CSV for table {name!r} at {path}")
        store.put(name, load_csv(path, catalog.table(name)))
        compute_stats(store, name)
    return store


def quantile_grid(col: ColumnMeta) -> list[float]:
    if col.quantiles:
        return col.quantiles
    if col.min_value is not None and col.max_value is not None \
            and not isinstance(col.min_value, str):
        lo, hi = float(col.min_value), float(col.max_value)
        return list(np.linspace(lo, hi, N_QUANTILES))
    n = max(col.distinct or 1, 1)
    return list(np.linspace(0, math.sqrt(n) * n, N_QUANTILES))
