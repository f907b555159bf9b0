"""Data-transfer time model: linear rates with a latency floor."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..batch import ColumnarBatch
from ..errors import AdapterUnavailable
from ..types import ColumnType, Field, Kind

INFINITE_RATE = float("inf")


@dataclass
class TransferModel:
    import_rate: float = INFINITE_RATE   # bytes/second into the engine
    export_rate: float = INFINITE_RATE   # bytes/second out of the engine
    floor_seconds: float = 0.0

    def transfer_time(self, nbytes: float) -> float:
        moved = nbytes / self.import_rate + nbytes / self.export_rate
        return max(moved, self.floor_seconds)


def transfer_time(model: TransferModel, nbytes: float) -> float:
    return model.transfer_time(nbytes)


IN_PROCESS = TransferModel(INFINITE_RATE, INFINITE_RATE, 0.0)

_CAL_SIZES = (20_000, 100_000, 400_000)


def _payload(num_rows: int) -> ColumnarBatch:
    data = np.arange(num_rows, dtype=np.int64)
    ones = np.ones(num_rows, dtype=bool)
    return ColumnarBatch([Field("v", ColumnType(Kind.INT), False)],
                         [data], [ones], num_rows)


def calibrate(adapter, table_name: str = "calibration_probe",
              repeats: int = 2) -> TransferModel:
    """Measure import/export rates and the latency floor with three payload
    sizes of timed round trips."""
    if getattr(adapter, "in_process", False):
        # same-process engines move nothing; only measure the floor
        t0 = time.perf_counter()
        adapter.import_table(table_name, _payload(16))
        adapter.export(f"select * from {table_name}")
        adapter.drop_table(table_name)
        floor = time.perf_counter() - t0
        return TransferModel(INFINITE_RATE, INFINITE_RATE, min(floor, 1e-3))
    imports, exports = [], []
    floor = float("inf")
    try:
        for rows in _CAL_SIZES:
            batch = _payload(rows // 9)  # ~9 payload bytes per int row
            nbytes = batch.payload_bytes()
            best_i, best_e = float("inf"), float("inf")
            for _ in range(repeats):
                t0 = time.perf_counter()
                adapter.import_table(table_name, batch)
                t1 = time.perf_counter()
                adapter.export(f"select * from {table_name}")
                t2 = time.perf_counter()
                adapter.drop_table(table_name)
                best_i = min(best_i, t1 - t0)
                best_e = min(best_e, t2 - t1)
                floor = min(floor, (t2 - t0))
            imports.append((nbytes, best_i))
            exports.append((nbytes, best_e))
    except Exception as exc:
        raise AdapterUnavailable(f"calibration failed: {exc}") from exc

    def slope(points):
        (s0, t0), (s1, t1) = points[0], points[-1]
        d = (t1 - t0) / max(s1 - s0, 1.0)
        return (1.0 / d) if d > 1e-12 else INFINITE_RATE

    return TransferModel(import_rate=slope(imports),
                         export_rate=slope(exports),
                         floor_seconds=floor)
