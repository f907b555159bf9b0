"""Ordered covering index: point lookups and selective scans over a column
the base table is not sorted by.

Build materializes the table sorted by the indexed column (nulls excluded:
no sargable predicate accepts them); run binary-searches the boundary
positions and slices.  Output schema equals the scanned table, so the
fragment is a drop-in replacement for Filter(Scan(t), pred).
"""

from __future__ import annotations

import numpy as np

from ..batch import ColumnarBatch
from ..errors import NonSargable, QaccelError, StaleState
from ..plan import Filter, LogicalPlan, Scan
from ..templates import (BOOL_EXPR, INSTANTIATION_TIME, RUN_TIME, Instantiation,
                         PlanTemplate, TreeToken, TypedVariable, TABLE_REF)
from ..types import Catalog
from .base import Accelerator, AccelContext
from .common import extract_range, slice_sorted


class OrderedIndex(Accelerator):
    accel_id = "ordered_index"
    midplan = False

    def template(self) -> PlanTemplate:
        root = TreeToken("Filter", (
            TreeToken("Scan", (TypedVariable("table", TABLE_REF,
                                             INSTANTIATION_TIME),)),
            TypedVariable("pred", BOOL_EXPR, RUN_TIME)))
        return PlanTemplate(self.accel_id, root, validator=self._valid)

    def _valid(self, inst: Instantiation, catalog: Catalog) -> bool:
        try:
            table = inst.variables.get("table")
            pred = inst.variables.get("pred")
            if table is None or pred is None or not catalog.has_table(table):
                return False
            spec = extract_range(pred)
            if spec is None:
                return False
            meta = catalog.table(table)
            if not meta.has_column(spec.column):
                return False
            return meta.column(spec.column).ctype.is_orderable
        except QaccelError:
            return False

    def derived_bindings(self, inst: Instantiation) -> dict:
        pred = inst.variables.get("pred")
        if pred is None:
            return {}
        spec = extract_range(pred)
        return {} if spec is None else {"order_col": spec.column}

    def fragment_plan(self, inst: Instantiation) -> LogicalPlan:
        return Filter(Scan(inst.variables["table"]), inst.variables["pred"])

    def estimate_state_bytes(self, inst: Instantiation, catalog: Catalog) -> int:
        meta = catalog.table(inst.variables["table"])
        return int(meta.row_count * max(meta.avg_row_bytes, 8) + 256)

    def build(self, inst: Instantiation, ctx: AccelContext):
        table = inst.variables["table"]
        pred = inst.variables["pred"]
        spec = extract_range(pred)
        if spec is None:
            raise NonSargable("predicate is not a single-column range")
        batch = ctx.adapter.submit(f"select * from {table}")
        ci = batch.column_index(spec.column)
        keep = batch.valid[ci]
        batch = batch.mask(keep)
        payload = batch.columns[ci]
        if payload.dtype == object:
            _, codes = np.unique(np.array(list(payload), dtype=object),
                                 return_inverse=True)
            order = np.argsort(codes, kind="stable")
        else:
            order = np.argsort(payload, kind="stable")
        sorted_batch = batch.take(order)
        return {
            "column": spec.column,
            "col_type": batch.schema[ci].ctype,
            "keys": sorted_batch.columns[ci],
            "batch": sorted_batch,
            "generation": ctx.generation,
        }

    def run(self, state, inst: Instantiation, input_batch,
            ctx: AccelContext) -> ColumnarBatch:
        if state["generation"] != ctx.generation:
            raise StaleState("index predates a data reload")
        pred = inst.variables["pred"]
        spec = extract_range(pred)
        if spec is None or spec.column != state["column"]:
            raise NonSargable("predicate is not a range on the indexed column")
        a, b = slice_sorted(state["keys"], spec, state["col_type"])
        batch: ColumnarBatch = state["batch"]
        return batch.take(np.arange(a, b))
