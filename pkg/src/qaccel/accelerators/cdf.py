"""Cumulative filtered aggregates: grouped SUM/COUNT/AVG under a range
predicate on one ordered column.

Build sorts the input rows by (group, order column) and stores running
aggregates at every distinct order value; a range query then costs two
binary searches per group and a subtraction.  Exactness: integer/decimal
sums accumulate in int64, so the difference of two prefix sums is the true
range sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..batch import ColumnarBatch
from ..errors import NonSargable, QaccelError, StaleState
from ..executor import Evaluator
from ..plan import (AggExpr, ColumnRef, Filter, GroupByAgg, LogicalPlan,
                    ScalarExpr, expr_columns)
from ..schema import TypeEnv, expr_type, output_schema
from ..sql import unparse
from ..templates import (BOOL_EXPR, COLUMN_EXPR, COLUMN_REF, INSTANTIATION_TIME,
                         RUN_TIME, Alternation, Hole, Instantiation, LeafToken,
                         PlanTemplate, Repetition, TreeToken, TypedVariable)
from ..types import Catalog, ColumnType, Field, Kind
from .base import Accelerator, AccelContext
from .common import extract_range, slice_sorted

SUM, COUNT, AVG, COUNT_STAR = 0, 1, 2, 3


@dataclass
class Params:
    input_plan: LogicalPlan
    predicate: ScalarExpr | None
    keys: list[str]
    aggs: list[tuple[int, ScalarExpr | None]]


def _params(inst: Instantiation) -> Params:
    keys = [b.variables["key"] for b in inst.repetitions.get("keys", [])]
    aggs = []
    for b in inst.repetitions.get("aggs", []):
        kind = b.alternations.get("agg_kind")
        if kind == SUM:
            aggs.append((SUM, b.variables["sum_arg"]))
        elif kind == COUNT:
            aggs.append((COUNT, b.variables["count_arg"]))
        elif kind == AVG:
            aggs.append((AVG, b.variables["avg_arg"]))
        else:
            aggs.append((COUNT_STAR, None))
    return Params(inst.variables.get("input"),
                  inst.variables.get("pred"), keys, aggs)


class CumulativeAggregates(Accelerator):
    accel_id = "cdf"
    midplan = False

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
                                  LeafToken("Agg.count_star"),
                              )), Hole("a"))),
                          LeafToken("Aggs.nil"), "a")
        root = TreeToken("GroupByAgg", (
            TreeToken("Filter", (
                TypedVariable("input", "table_expr", INSTANTIATION_TIME),
                TypedVariable("pred", BOOL_EXPR, RUN_TIME))),
            keys, aggs))
        return PlanTemplate(self.accel_id, root, validator=self._valid)

    def _valid(self, inst: Instantiation, catalog: Catalog) -> bool:
        try:
            p = _params(inst)
            if p.input_plan is None or p.predicate is None:
                return False
            spec = extract_range(p.predicate)
            if spec is None:
                return False
            fields = output_schema(p.input_plan, catalog)
            names = {f.name for f in fields}
            env = TypeEnv(fields)
            if spec.column not in names:
                return False
            order_t, _ = expr_type(ColumnRef(spec.column), env)
            if not order_t.is_orderable:
                return False
            if not set(p.keys) <= names:
                return False
            for kind, arg in p.aggs:
                if kind == COUNT_STAR:
                    continue
                if not expr_columns(arg) <= names:
                    return False
                t, _ = expr_type(arg, env)
                if kind == SUM and t.kind not in (Kind.INT, Kind.DECIMAL):
                    return False
                if kind == AVG and not t.is_numeric:
                    return False
            return True
        except QaccelError:
            return False

    def derived_bindings(self, inst: Instantiation) -> dict:
        p = _params(inst)
        if p.predicate is None:
            return {}
        spec = extract_range(p.predicate)
        return {} if spec is None else {"order_col": spec.column}

    def fragment_plan(self, inst: Instantiation) -> LogicalPlan:
        p = _params(inst)
        aggs = []
        for i, (kind, arg) in enumerate(p.aggs):
            func = {SUM: "sum", COUNT: "count", AVG: "avg",
                    COUNT_STAR: "count_star"}[kind]
            aggs.append(AggExpr(func, arg, f"agg{i}"))
        return GroupByAgg(Filter(p.input_plan, p.predicate),
                          tuple(ColumnRef(k) for k in p.keys),
                          tuple(p.keys), tuple(aggs))

    def estimate_state_bytes(self, inst: Instantiation, catalog: Catalog) -> int:
        from ..cardinality import estimate_cardinality, _column_distinct
        p = _params(inst)
        rows = estimate_cardinality(p.input_plan, catalog)
        spec = extract_range(p.predicate) if p.predicate is not None else None
        distinct = _column_distinct(spec.column, catalog, rows) if spec else rows
        groups = 1.0
        for k in p.keys:
            groups *= _column_distinct(k, catalog, rows)
        entries = min(rows, distinct * max(groups, 1.0))
        per_agg = sum(2 if kind in (SUM, AVG) else 1
                      for kind, _ in p.aggs) + 1
        return int(entries * 8 * (1 + per_agg) + max(groups, 1.0) * 24 + 256)

    # --- build ---

    def build(self, inst: Instantiation, ctx: AccelContext):
        p = _params(inst)
        spec = extract_range(p.predicate)
        if spec is None:
            raise NonSargable("predicate is not a single-column range")
        batch = ctx.adapter.submit(unparse(p.input_plan))
        oi = batch.column_index(spec.column)
        keep = batch.valid[oi]  # null order values never satisfy a range
        batch = batch.mask(keep)
        ev = Evaluator(batch)
        order_col = ev.eval(ColumnRef(spec.column))
        from ..executor import group_ids
        key_cols = [ev.eval(ColumnRef(k)) for k in p.keys]
        gids, n_groups, first_idx = group_ids(key_cols, batch.num_rows)
        if not p.keys and batch.num_rows == 0:
            n_groups = 1

        if order_col.payload.dtype == object:
            _, ocodes = np.unique(np.array(list(order_col.payload),
                                           dtype=object), return_inverse=True)
        else:
            ocodes = order_col.payload
        order = np.lexsort((ocodes, gids))
        sg = gids[order]
        sv = order_col.payload[order]
        # distinct (group, value) runs
        if batch.num_rows:
            new_run = np.ones(batch.num_rows, dtype=bool)
            new_run[1:] = (sg[1:] != sg[:-1]) | _neq(sv[1:], sv[:-1])
            run_of_row = np.cumsum(new_run) - 1
            n_runs = int(run_of_row[-1]) + 1
            run_starts = np.nonzero(new_run)[0]
            run_group = sg[run_starts]
            run_value = sv[run_starts]
        else:
            run_of_row = np.zeros(0, dtype=np.int64)
            n_runs = 0
            run_group = np.zeros(0, dtype=np.int64)
            run_value = order_col.payload[:0]
        # group -> [start, end) in run space
        span_start = np.searchsorted(run_group, np.arange(n_groups), "left")
        span_end = np.searchsorted(run_group, np.arange(n_groups), "right")

        layout = []
        cums = []
        cs_run = np.zeros(n_runs, dtype=np.int64)
        np.add.at(cs_run, run_of_row, 1)
        cum_cs = np.cumsum(cs_run)

        for i, (kind, arg) in enumerate(p.aggs):
            if kind == COUNT_STAR:
                layout.append({"kind": kind})
                continue
            col = ev.eval(arg)
            payload = col.payload[order]
            valid = col.valid[order]
            nn_run = np.zeros(n_runs, dtype=np.int64)
            np.add.at(nn_run, run_of_row[valid], 1)
            cum_nn = np.cumsum(nn_run)
            entry = {"kind": kind, "nn": len(cums), "type": col.ctype}
            cums.append(cum_nn)
            if kind in (SUM, AVG):
                if col.ctype.kind in (Kind.INT, Kind.DECIMAL, Kind.DATE):
                    acc = np.zeros(n_runs, dtype=np.int64)
                else:
                    acc = np.zeros(n_runs, dtype=np.float64)
                np.add.at(acc, run_of_row[valid],
                          payload[valid].astype(acc.dtype))
                entry["sum"] = len(cums)
                cums.append(np.cumsum(acc))
            layout.append(entry)

        key_schema = [Field(k, kc.ctype, bool((~kc.valid).any())
                            if batch.num_rows else True)
                      for k, kc in zip(p.keys, key_cols)]
        return {
            "order_col": spec.column,
            "order_type": order_col.ctype,
            "key_values": [kc.payload[first_idx] for kc in key_cols],
            "key_valid": [kc.valid[first_idx] for kc in key_cols],
            "key_schema": key_schema,
            "span_start": span_start,
            "span_end": span_end,
            "run_value": run_value,
            "cum_cs": cum_cs,
            "cums": cums,
            "layout": layout,
            "n_groups": n_groups,
            "keyless": not p.keys,
            "generation": ctx.generation,
        }

    # --- run ---

    def run(self, state, inst: Instantiation, input_batch,
            ctx: AccelContext) -> ColumnarBatch:
        if state["generation"] != ctx.generation:
            raise StaleState("cumulative aggregates predate a data reload")
        p = _params(inst)
        spec = extract_range(p.predicate)
        if spec is None or spec.column != state["order_col"]:
            raise NonSargable(
                "run-time predicate is not a range on the built column")
        n_groups = state["n_groups"]
        run_value = state["run_value"]
        cum_cs = state["cum_cs"]
        cums = state["cums"]
        otype = state["order_type"]

        def cum_diff(arr, s, a, b):
            if b <= a:
                return 0
            hi = arr[s + b - 1]
            lo = arr[s + a - 1] if (s + a) > 0 else 0
            return hi - lo

        rows_cs = np.zeros(n_groups, dtype=np.int64)
        bounds = []
        for s, e in zip(state["span_start"], state["span_end"]):
            a, b = slice_sorted(run_value[s:e], spec, otype)
            bounds.append((s, a, b))
        for g, (s, a, b) in enumerate(bounds):
            rows_cs[g] = cum_diff(cum_cs, s, a, b)

        keep = rows_cs > 0
        if state["keyless"]:
            keep = np.ones(n_groups, dtype=bool)  # keyless: always one row
        kept = np.nonzero(keep)[0]

        out_schema = list(state["key_schema"])
        out_cols = [kv[kept] for kv in state["key_values"]]
        out_vals = [kv[kept] for kv in state["key_valid"]]

        for i, entry in enumerate(state["layout"]):
            kind = entry["kind"]
            if kind == COUNT_STAR:
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.INT), False))
                out_cols.append(rows_cs[kept])
                out_vals.append(np.ones(len(kept), dtype=bool))
                continue
            nn_arr = cums[entry["nn"]]
            nn = np.array([cum_diff(nn_arr, s, a, b)
                           for s, a, b in bounds], dtype=np.int64)[kept]
            if kind == COUNT:
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.INT), False))
                out_cols.append(nn)
                out_vals.append(np.ones(len(kept), dtype=bool))
                continue
            s_arr = cums[entry["sum"]]
            sums = np.array([cum_diff(s_arr, s, a, b)
                             for s, a, b in bounds])[kept]
            t: ColumnType = entry["type"]
            if kind == SUM:
                out_schema.append(Field(f"agg{i}", t, True))
                out_cols.append(sums.astype(s_arr.dtype))
                out_vals.append(nn > 0)
            else:  # AVG
                denom = np.maximum(nn, 1)
                scale = 10.0 ** t.scale if t.kind == Kind.DECIMAL else 1.0
                out_schema.append(Field(f"agg{i}", ColumnType(Kind.REAL), True))
                out_cols.append(sums.astype(np.float64) / scale / denom)
                out_vals.append(nn > 0)

        return ColumnarBatch(out_schema, out_cols, out_vals, len(kept))


def _neq(a, b):
    if a.dtype == object:
        return np.array([x != y for x, y in zip(a, b)], dtype=bool)
    return a != b
