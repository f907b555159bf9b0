"""Engine adapters: how the planner and accelerators talk to a backing
relational engine.

Three reference adapters: the in-process engine over the columnar store
(production path for tests and the CLI), a scripted mock with configurable
latency/throughput for calibration and planner tests, and a file-based
external-engine adapter driving a SQLite process through CSV import/export
for integration smoke tests.
"""

from __future__ import annotations

import time

from .batch import ColumnarBatch
from .cardinality import estimate_cardinality
from .errors import AdapterUnavailable, ImportFailed
from .executor import execute_oracle
from .sql import parse
from .store import DataStore


class EngineAdapter:
    """submit/import/export against one engine."""

    def submit(self, sql: str) -> ColumnarBatch:
        raise NotImplementedError

    def import_table(self, name: str, batch: ColumnarBatch):
        raise NotImplementedError

    def export(self, sql: str) -> ColumnarBatch:
        return self.submit(sql)

    def estimate(self, sql: str) -> int:
        raise NotImplementedError

    def drop_table(self, name: str):
        pass


class OracleAdapter(EngineAdapter):
    """In-process engine over a DataStore; zero transfer cost."""

    in_process = True

    def __init__(self, store: DataStore):
        self.store = store

    @property
    def catalog(self):
        return self.store.catalog

    def submit(self, sql: str) -> ColumnarBatch:
        plan = parse(sql, self.store.catalog)
        return execute_oracle(plan, self.store)

    def submit_plan(self, plan) -> ColumnarBatch:
        return execute_oracle(plan, self.store)

    def import_table(self, name: str, batch: ColumnarBatch):
        self.store.register_temp(name, batch)

    def drop_table(self, name: str):
        self.store.drop_temp(name)

    def estimate(self, sql: str) -> int:
        plan = parse(sql, self.store.catalog)
        return estimate_cardinality(plan, self.store.catalog)


class MockTransferAdapter(EngineAdapter):
    """Wraps another adapter and simulates data-transfer costs.

    ``rate_bytes_per_s`` throttles imports/exports; ``floor_s`` is a fixed
    per-call latency.  Sleeps are real so calibration can measure them.
    """

    in_process = False

    def __init__(self, inner: EngineAdapter, rate_bytes_per_s: float = 1e6,
                 floor_s: float = 0.0, simulate: bool = True):
        self.inner = inner
        self.rate = rate_bytes_per_s
        self.floor = floor_s
        self.simulate = simulate
        self.bytes_moved = 0

    def _delay(self, nbytes: int):
        self.bytes_moved += nbytes
        if self.simulate:
            time.sleep(self.floor + nbytes / self.rate)

    def submit(self, sql: str) -> ColumnarBatch:
        out = self.inner.submit(sql)
        self._delay(out.payload_bytes())
        return out

    def import_table(self, name: str, batch: ColumnarBatch):
        self._delay(batch.payload_bytes())
        self.inner.import_table(name, batch)

    def drop_table(self, name: str):
        self.inner.drop_table(name)

    def estimate(self, sql: str) -> int:
        return self.inner.estimate(sql)

    @property
    def catalog(self):
        return self.inner.catalog


class SqliteAdapter(EngineAdapter):
    """External analytical engine reached through CSV-file import/export.

    Integration tier: exercises the unparse -> foreign engine -> batch
    path.  Type fidelity is limited to what the round trip preserves, so
    production tests stick to the in-process adapter.
    """

    in_process = False

    def __init__(self, store: DataStore):
        try:
            import sqlite3
        except ImportError as exc:  # pragma: no cover
            raise AdapterUnavailable("sqlite3 unavailable") from exc
        self.sqlite3 = sqlite3
        self.store = store
        self._temps: set[str] = set()
        self.conn = sqlite3.connect(":memory:")
        for name in list(store.catalog.tables):
            if name not in store.temp_names and name in store.tables:
                self.import_table(name, store.get(name))

    @property
    def catalog(self):
        return self.store.catalog

    def submit(self, sql: str) -> ColumnarBatch:
        from .batch import ColumnarBatch
        from .schema import output_schema
        if " from " not in f" {sql.strip().lower()} ":
            # constant-only probe such as "select 1"
            cur = self.conn.execute(sql)
            rows = cur.fetchall()
            from .types import ColumnType, Field, Kind
            fields = []
            for i, col in enumerate(cur.description or []):
                sample = rows[0][i] if rows else 0
                kind = Kind.REAL if isinstance(sample, float) else \
                    Kind.STRING if isinstance(sample, str) else Kind.INT
                fields.append(Field(col[0] or f"col{i+1}", ColumnType(kind)))
            return ColumnarBatch.from_rows(fields, [tuple(r) for r in rows])
        plan = parse(sql, self.store.catalog)
        fields = output_schema(plan, self.store.catalog)
        cur = self.conn.execute(sql)
        rows = cur.fetchall()
        from .types import Kind
        pyrows = []
        for r in rows:
            out = []
            for v, f in zip(r, fields):
                if v is not None and f.ctype.kind == Kind.BOOL:
                    v = bool(v)
                if v is not None and f.ctype.kind in (Kind.INT, Kind.DATE,
                                                      Kind.DECIMAL):
                    v = int(round(v))
                out.append(v)
            pyrows.append(tuple(out))
        return ColumnarBatch.from_rows(fields, pyrows)

    def import_table(self, name: str, batch: ColumnarBatch):
        cols = ", ".join(f.name for f in batch.schema)
        placeholders = ", ".join("?" for _ in batch.schema)
        try:
            self.conn.execute(f"DROP TABLE IF EXISTS {name}")
            self.conn.execute(
                f"CREATE TABLE {name} ({cols})")
            self.conn.executemany(
                f"INSERT INTO {name} VALUES ({placeholders})",
                [tuple(r) for r in batch.to_rows()])
            self.conn.commit()
        except self.sqlite3.Error as exc:
            raise ImportFailed(str(exc)) from exc
        if not self.store.catalog.has_table(name):
            from .types import ColumnMeta, TableMeta
            self.store.catalog.add_table(TableMeta(
                name,
                [ColumnMeta(f.name, f.ctype, f.nullable) for f in batch.schema],
                row_count=batch.num_rows))
            self._temps.add(name)

    def drop_table(self, name: str):
        self.conn.execute(f"DROP TABLE IF EXISTS {name}")
        if name in getattr(self, "_temps", set()):
            self.store.catalog.drop_table(name)
            self._temps.discard(name)

    def estimate(self, sql: str) -> int:
        plan = parse(sql, self.store.catalog)
        return estimate_cardinality(plan, self.store.catalog)
