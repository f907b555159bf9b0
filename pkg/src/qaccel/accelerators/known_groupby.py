"""Grouped aggregation over a small, known group domain with all aggregate
expressions fused into one pass.

Build records the distinct values of each key column (from the base data)
and a perfect slot mapping over their product; run turns incoming key
values into dense slots and feeds one fused kernel, so no hash map is
consulted per row and every aggregate updates in the same pass.  An input
key outside the recorded domain signals staleness (UnknownGroupValue) and
the planner falls back to the engine.

This accelerator sits mid-plan: run() receives the child's batch.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..batch import ColumnarBatch
from ..errors import QaccelError, StaleState, UnknownGroupValue
from ..executor import Evaluator
from ..plan import AggExpr, ColumnRef, GroupByAgg, LogicalPlan, expr_columns
from ..schema import TypeEnv, expr_type, output_schema
from ..templates import (COLUMN_EXPR, COLUMN_REF, INSTANTIATION_TIME, RUN_TIME,
                         Alternation, Hole, Instantiation, LeafToken,
                         PlanTemplate, Repetition, TreeToken, TypedVariable)
from ..types import Catalog, ColumnType, Field, Kind
from .base import Accelerator, AccelContext

SUM, COUNT, AVG, MIN, MAX, COUNT_STAR = 0, 1, 2, 3, 4, 5
_FUNC = {SUM: "sum", COUNT: "count", AVG: "avg", MIN: "min", MAX: "max",
         COUNT_STAR: "count_star"}

DEFAULT_GROUP_LIMIT = 256


def _params(inst: Instantiation):
    keys = [b.variables["key"] for b in inst.repetitions.get("keys", [])]
    aggs = []
    for b in inst.repetitions.get("aggs", []):
        kind = b.alternations.get("agg_kind")
        arg = None
        for name in ("sum_arg", "count_arg", "avg_arg", "min_arg", "max_arg"):
            if name in b.variables:
                arg = b.variables[name]
        aggs.append((kind, arg))
    return inst.variables.get("input"), keys, aggs


class KnownGroupBy(Accelerator):
    accel_id = "known_groupby"
    midplan = True

    def __init__(self, group_limit: int = DEFAULT_GROUP_LIMIT):
        self.group_limit = group_limit

    def template(self) -> PlanTemplate:
        keys = Repetition("keys",
                          TreeToken("Keys.cons",
                                    (TypedVariable("key", COLUMN_REF,
                                                   INSTANTIATION_TIME),
                                     Hole("k"))),
                          LeafToken("Keys.nil"), "k")
        aggs = Repetition("aggs",
                          TreeToken("Aggs.cons", (
                              Alternation("agg_kind", (
                                  TreeToken("Agg.sum",
                                            (TypedVariable("sum_arg", COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  TreeToken("Agg.count",
                                            (TypedVariable("count_arg",
                                                           COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  TreeToken("Agg.avg",
                                            (TypedVariable("avg_arg", COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  TreeToken("Agg.min",
                                            (TypedVariable("min_arg", COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  TreeToken("Agg.max",
                                            (TypedVariable("max_arg", COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  LeafToken("Agg.count_star"),
                              )), Hole("a"))),
                          LeafToken("Aggs.nil"), "a")
        root = TreeToken("GroupByAgg", (
            TypedVariable("input", "table_expr", RUN_TIME), keys, aggs))
        return PlanTemplate(self.accel_id, root, validator=self._valid)

    def _valid(self, inst: Instantiation, catalog: Catalog) -> bool:
        try:
            input_plan, keys, aggs = _params(inst)
            if input_plan is None or not keys:
                return False
            fields = output_schema(input_plan, catalog)
            names = {f.name for f in fields}
            env = TypeEnv(fields)
            if not set(keys) <= names:
                return False
            domain = 1
            for k in keys:
                meta = self._base_column(k, catalog)
                if meta is None or not meta.distinct:
                    return False
                domain *= meta.distinct + (1 if meta.nullable else 0)
                if domain > self.group_limit:
                    return False
            for kind, arg in aggs:
                if kind == COUNT_STAR:
                    continue
                if arg is None or not expr_columns(arg) <= names:
                    return False
                t, _ = expr_type(arg, env)
                if kind in (SUM, AVG) and not t.is_numeric:
                    return False
                if kind in (MIN, MAX) and (t.kind == Kind.STRING
                                           or not t.is_orderable):
                    return False
            return True
        except QaccelError:
            return False

    @staticmethod
    def _base_column(name: str, catalog: Catalog):
        for t in catalog.tables.values():
            for c in t.columns:
                if c.name == name:
                    return c
        return None

    def fragment_plan(self, inst: Instantiation) -> LogicalPlan:
        input_plan, keys, aggs = _params(inst)
        specs = tuple(AggExpr(_FUNC[kind], arg, f"agg{i}")
                      for i, (kind, arg) in enumerate(aggs))
        return GroupByAgg(input_plan, tuple(ColumnRef(k) for k in keys),
                          tuple(keys), specs)

    def estimate_state_bytes(self, inst: Instantiation, catalog: Catalog) -> int:
        _, keys, aggs = _params(inst)
        domain = 1
        for k in keys:
            meta = self._base_column(k, catalog)
            domain *= (meta.distinct or 1) if meta else 1
        return domain * (16 * len(keys)) + 64 * len(aggs) + 256

    # --- build: record domains and the slot layout ---

    def build(self, inst: Instantiation, ctx: AccelContext):
        input_plan, keys, aggs = _params(inst)
        domains = []
        for k in keys:
            meta = self._base_column(k, ctx.catalog)
            if meta is None:
                raise QaccelError(f"key column {k!r} has no base table")
            table = next(t.name for t in ctx.catalog.tables.values()
                         if t.has_column(k))
            batch = ctx.adapter.submit(f"select * from {table}")
            payload, valid = batch.column(k)
            present = payload[valid]
            if present.dtype == object:
                values = np.unique(np.array(list(present), dtype=object))
            else:
                values = np.unique(present)
            domains.append({
                "values": values,
                "has_null": bool((~valid).any()),
                "type": batch.schema[batch.column_index(k)].ctype,
            })
        n_groups = 1
        for d in domains:
            n_groups *= len(d["values"]) + (1 if d["has_null"] else 0)
        if n_groups > self.group_limit:
            raise QaccelError(f"group domain {n_groups} exceeds "
                              f"{self.group_limit}")
        return {
            "keys": keys,
            "domains": domains,
            "n_groups": int(n_groups),
            "aggs": [(kind, arg) for kind, arg in aggs],
            "generation": ctx.generation,
        }

    # --- run: fused single-pass aggregation into fixed slots ---

    def run(self, state, inst: Instantiation, input_batch: ColumnarBatch,
            ctx: AccelContext) -> ColumnarBatch:
        if state["generation"] != ctx.generation:
            raise StaleState("group domain predates a data reload")
        if input_batch is None:
            raise QaccelError("known-group-by runs mid-plan and needs input")
        keys = state["keys"]
        domains = state["domains"]
        n = input_batch.num_rows
        gids = np.zeros(n, dtype=np.int64)
        for k, d in zip(keys, domains):
            payload, valid = input_batch.column(k)
            values = d["values"]
            width = len(values) + (1 if d["has_null"] else 0)
            if values.dtype == object:
                # the domain is tiny by construction: one fixed-width C
                # comparison per domain value beats any per-row hashing
                uarr = payload.astype("U") if n else payload
                codes = np.full(n, len(values), dtype=np.int64)
                unknown = valid.copy()
                for i, v in enumerate(values):
                    hit = (uarr == v) & valid
                    codes[hit] = i
                    unknown &= ~hit
                if unknown.any():
                    bad = payload[int(np.nonzero(unknown)[0][0])]
                    raise UnknownGroupValue(
                        f"value {bad!r} of {k!r} is outside the recorded "
                        "group domain")
            else:
                codes = np.searchsorted(values, payload)
                codes = np.clip(codes, 0, max(len(values) - 1, 0))
                ok = np.ones(n, dtype=bool)
                if len(values):
                    ok = values[codes] == payload
                bad = valid & ~ok
                if bad.any():
                    i = int(np.nonzero(bad)[0][0])
                    raise UnknownGroupValue(
                        f"value {payload[i]!r} of {k!r} is outside the "
                        "recorded group domain")
                codes = np.where(valid, codes, len(values))
            if (~valid).any() and not d["has_null"]:
                raise UnknownGroupValue(f"unexpected null in key {k!r}")
            gids = gids * width + codes

        ev = Evaluator(input_batch)
        int_specs, float_specs = [], []
        cols = {}
        for i, (kind, arg) in enumerate(state["aggs"]):
            if kind == COUNT_STAR:
                continue
            col = ev.eval(arg)
            cols[i] = col
            if kind == COUNT:
                # counting consults validity only; strings never reach the
                # numeric kernel
                from ..executor import Column
                stub = Column(np.zeros(n, dtype=np.int64), col.valid,
                              ColumnType(Kind.INT))
                int_specs.append((i, stub, kernels.OP_SUM))
                continue
            op = {MIN: kernels.OP_MIN, MAX: kernels.OP_MAX}.get(kind,
                                                                kernels.OP_SUM)
            spec = (i, col, op)
            if col.ctype.kind == Kind.REAL:
                float_specs.append(spec)
            else:
                int_specs.append(spec)

        n_groups = state["n_groups"]
        results = {}
        row_counts = np.bincount(gids, minlength=n_groups).astype(np.int64)

        def run_kernel(specs, dtype, fn):
            if not specs:
                return
            vals = np.ascontiguousarray(np.stack(
                [np.where(c.valid, c.payload, c.payload.dtype.type(0))
                 .astype(dtype) for _, c, _ in specs]))
            valid = np.ascontiguousarray(np.stack(
                [c.valid for _, c, _ in specs]).astype(np.uint8))
            ops = np.array([op for _, _, op in specs], dtype=np.int32)
            out, nn, _ = fn(np.ascontiguousarray(gids), n_groups, vals, valid,
                            ops)
            for slot, (i, c, op) in enumerate(specs):
                results[i] = (out[slot], nn[slot])

        run_kernel(int_specs, np.int64, kernels.fused_group_agg_i64)
        run_kernel(float_specs, np.float64, kernels.fused_group_agg_f64)

        keep = np.nonzero(row_counts > 0)[0]
        out_schema, out_cols, out_vals = [], [], []
        slots = keep.copy()
        for k, d in list(zip(keys, domains))[::-1]:
            width = len(d["values"]) + (1 if d["has_null"] else 0)
            codes = slots % width
            slots = slots // width
            isnull = codes == len(d["values"])
            payload = np.empty(len(keep), dtype=d["values"].dtype)
            safe = np.clip(codes, 0, max(len(d["values"]) - 1, 0))
            if len(d["values"]):
                payload[:] = d["values"][safe]
            out_schema.insert(0, Field(k, d["type"], bool(d["has_null"])))
            out_cols.insert(0, payload)
            out_vals.insert(0, ~isnull)

        for i, (kind, arg) in enumerate(state["aggs"]):
            if kind == COUNT_STAR:
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.INT), False))
                out_cols.append(row_counts[keep])
                out_vals.append(np.ones(len(keep), dtype=bool))
                continue
            out, nn = results[i]
            col = cols[i]
            nnk = nn[keep]
            if kind == COUNT:
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.INT), False))
                out_cols.append(nnk.astype(np.int64))
                out_vals.append(np.ones(len(keep), dtype=bool))
            elif kind == AVG:
                denom = np.maximum(nnk, 1)
                scale = 10.0 ** col.ctype.scale \
                    if col.ctype.kind == Kind.DECIMAL else 1.0
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.REAL), True))
                out_cols.append(out[keep].astype(np.float64) / scale / denom)
                out_vals.append(nnk > 0)
            else:
                out_schema.append(Field(f"agg{i}", col.ctype, True))
                out_cols.append(out[keep])
                out_vals.append(nnk > 0)

        return ColumnarBatch(out_schema, out_cols, out_vals, len(keep))
