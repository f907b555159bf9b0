"""Scalar types, schema fields, and the table catalog.

Decimals are stored as scaled 64-bit integers (the scale lives in the type)
so that SUM/COUNT comparisons between execution paths are bit-exact.  Dates
are stored as days since 1970-01-01.
"""

from __future__ import annotations

import datetime
import json
from dataclasses import dataclass, field

from .errors import QaccelError, UnknownColumn, UnknownTable

EPOCH = datetime.date(1970, 1, 1)


class Kind:
    INT = "int"
    REAL = "real"
    DECIMAL = "decimal"
    STRING = "string"
    DATE = "date"
    BOOL = "bool"

ALL_KINDS = (Kind.INT, Kind.REAL, Kind.DECIMAL, Kind.STRING, Kind.DATE, Kind.BOOL)
NUMERIC_KINDS = (Kind.INT, Kind.REAL, Kind.DECIMAL)


@dataclass(frozen=True)
class ColumnType:
    kind: str
    scale: int = 0  # digits after the decimal point; only used by DECIMAL

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise QaccelError(f"unknown type kind {self.kind!r}")
        if self.kind != Kind.DECIMAL and self.scale != 0:
            raise QaccelError(f"scale only applies to decimal, not {self.kind}")

    @property
    def is_numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    @property
    def is_orderable(self) -> bool:
        return self.kind != Kind.BOOL

    def __repr__(self):
        if self.kind == Kind.DECIMAL:
            return f"decimal({self.scale})"
        return self.kind


INT = ColumnType(Kind.INT)
REAL = ColumnType(Kind.REAL)
STRING = ColumnType(Kind.STRING)
DATE = ColumnType(Kind.DATE)
BOOL = ColumnType(Kind.BOOL)


def decimal(scale: int) -> ColumnType:
    return ColumnType(Kind.DECIMAL, scale)


def date_to_days(text: str) -> int:
    """Parse YYYY-MM-DD into days since the epoch."""
    return (datetime.date.fromisoformat(text) - EPOCH).days


def days_to_date(days: int) -> str:
    return (EPOCH + datetime.timedelta(days=int(days))).isoformat()


@dataclass(frozen=True)
class Field:
    """One output column of a plan: name, type, nullability."""
    name: str
    ctype: ColumnType
    nullable: bool = True

    def __repr__(self):
        n = "" if self.nullable else " not null"
        return f"{self.name}:{self.ctype!r}{n}"


@dataclass
class ColumnMeta:
    name: str
    ctype: ColumnType
    nullable: bool = True
    distinct: int | None = None          # estimated distinct count
    quantiles: list | None = None        # 21-point grid over non-null values
    min_value: object = None
    max_value: object = None

    def as_field(self) -> Field:
        return Field(self.name, self.ctype, self.nullable)


@dataclass
class TableMeta:
    name: str
    columns: list[ColumnMeta]
    row_count: int = 0
    avg_row_bytes: float = 0.0
    primary_key: tuple[str, ...] = ()
    # (local column, referenced table, referenced column)
    foreign_keys: list[tuple[str, str, str]] = field(default_factory=list)

    def column(self, name: str) -> ColumnMeta:
        for c in self.columns:
            if c.name == name:
                return c
        raise UnknownColumn(f"no column {name!r} in table {self.name!r}")

    def has_column(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)


class Catalog:
    """Schema and statistics for every table the planner can see."""

    def __init__(self, tables: list[TableMeta]):
        self.tables: dict[str, TableMeta] = {}
        for t in tables:
            if t.name in self.tables:
                raise QaccelError(f"duplicate table {t.name!r}")
            seen = set()
            for c in t.columns:
                if c.name in seen:
                    raise QaccelError(f"duplicate column {c.name!r} in {t.name!r}")
                seen.add(c.name)
            if t.row_count < 0:
                raise QaccelError(f"negative row_count for {t.name!r}")
            for c in t.columns:
                if c.distinct is not None and c.distinct > max(t.row_count, 1):
                    c.distinct = max(t.row_count, 1)
            self.tables[t.name] = t

    def table(self, name: str) -> TableMeta:
        try:
            return self.tables[name]
        except KeyError:
            raise UnknownTable(f"no table named {name!r}") from None

    def has_table(self, name: str) -> bool:
        return name in self.tables

    def add_table(self, meta: TableMeta):
        self.tables[meta.name] = meta

    def drop_table(self, name: str):
        self.tables.pop(name, None)

    # --- JSON catalog file ---

    @classmethod
    def from_json_file(cls, path) -> "Catalog":
        with open(path) as f:
            doc = json.load(f)
        return cls.from_json(doc)

    @classmethod
    def from_json(cls, doc: dict) -> "Catalog":
        tables = []
        for t in doc["tables"]:
            cols = []
            for c in t["columns"]:
                cols.append(ColumnMeta(
                    name=c["name"],
                    ctype=_type_from_str(c["type"]),
                    nullable=c.get("nullable", True),
                    distinct=c.get("distinct"),
                    quantiles=c.get("quantiles"),
                    min_value=c.get("min"),
                    max_value=c.get("max"),
                ))
            tables.append(TableMeta(
                name=t["name"],
                columns=cols,
                row_count=t.get("row_count", 0),
                avg_row_bytes=t.get("avg_row_bytes", 0.0),
                primary_key=tuple(t.get("primary_key", [])),
                foreign_keys=[tuple(fk) for fk in t.get("foreign_keys", [])],
            ))
        return cls(tables)

    def to_json(self) -> dict:
        out = {"tables": []}
        for t in self.tables.values():
            cols = []
            for c in t.columns:
                d = {"name": c.name, "type": repr(c.ctype), "nullable": c.nullable}
                if c.distinct is not None:
                    d["distinct"] = c.distinct
                if c.quantiles is not None:
                    d["quantiles"] = c.quantiles
                if c.min_value is not None:
                    d["min"] = c.min_value
                if c.max_value is not None:
                    d["max"] = c.max_value
                cols.append(d)
            out["tables"].append({
                "name": t.name,
                "columns": cols,
                "row_count": t.row_count,
                "avg_row_bytes": t.avg_row_bytes,
                "primary_key": list(t.primary_key),
                "foreign_keys": [list(fk) for fk in t.foreign_keys],
            })
        return out


def _type_from_str(s: str) -> ColumnType:
    s = s.strip().lower()
    if s.startswith("decimal"):
        inner = s[s.index("(") + 1:s.index(")")] if "(" in s else "0"
        return ColumnType(Kind.DECIMAL, int(inner))
    for k in ALL_KINDS:
        if s == k:
            return ColumnType(k)
    raise QaccelError(f"unknown column type {s!r}")


@dataclass(frozen=True)
class EngineContext:
    """Backing-engine conventions that accelerators must respect."""
    nulls_first: bool = True
    decimal_note: str = "scaled int64"
    collation: str = "binary"
