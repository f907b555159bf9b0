"""Domain negation: answer a filtered grouped aggregate by running the
aggregate over the rows where the predicate is NOT TRUE and subtracting
from precomputed unfiltered totals.

Worth it exactly when the predicate keeps most rows: the negated side is
then small.  Supports SUM and COUNT; per-expression non-null counts are
precomputed so null semantics survive the subtraction.  A left-join form
covers predicates buried in an outer join's ON clause, which cannot be
lifted above the join.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..batch import ColumnarBatch
from ..errors import QaccelError, StaleState, UnsupportedAggregate
from ..plan import (AggExpr, ColumnRef, Compare, Filter, GroupByAgg, LeftJoin,
                    LogicalPlan, ScalarExpr, conjoin, digest,
                    expr_columns, is_not_true, split_conjuncts)
from ..schema import TypeEnv, expr_type, output_schema
from ..sql import unparse
from ..templates import (BOOL_EXPR, COLUMN_EXPR, COLUMN_REF, INSTANTIATION_TIME,
                         RUN_TIME, Alternation, Hole, Instantiation, LeafToken,
                         PlanTemplate, Repetition, TreeToken, TypedVariable)
from ..types import Catalog, Field, Kind
from .base import Accelerator, AccelContext
from .common import align_by_key, joint_key_codes, key_columns

SUM, COUNT, COUNT_STAR = 0, 1, 2


@dataclass
class Params:
    source: int                       # 0 filtered input, 1 left join
    input_plan: LogicalPlan | None
    left: LogicalPlan | None
    right: LogicalPlan | None
    predicate: ScalarExpr | None      # run-time
    keys: list[str]
    aggs: list[tuple[int, ScalarExpr | None]]


def _params(inst: Instantiation) -> Params:
    source = inst.alternations.get("source", 0)
    keys = [b.variables["key"] for b in inst.repetitions.get("keys", [])]
    aggs = []
    for b in inst.repetitions.get("aggs", []):
        kind = b.alternations.get("agg_kind")
        if kind == SUM:
            aggs.append((SUM, b.variables["sum_arg"]))
        elif kind == COUNT:
            aggs.append((COUNT, b.variables["count_arg"]))
        elif kind == COUNT_STAR:
            aggs.append((COUNT_STAR, None))
        else:
            aggs.append((-1, None))  # unknown: validator rejects
    return Params(
        source=source,
        input_plan=inst.variables.get("input"),
        left=inst.variables.get("left"),
        right=inst.variables.get("right"),
        predicate=inst.variables.get("pred", inst.variables.get("join_pred")),
        keys=keys,
        aggs=aggs,
    )


def _split_join_condition(cond: ScalarExpr, left_names: set, right_names: set):
    """Equi conjuncts across the two sides vs everything else."""
    eq, residual = [], []
    for c in split_conjuncts(cond):
        if isinstance(c, Compare) and c.op == "=":
            lc, rc = expr_columns(c.left), expr_columns(c.right)
            if lc and rc and ((lc <= left_names and rc <= right_names)
                              or (lc <= right_names and rc <= left_names)):
                eq.append(c)
                continue
        residual.append(c)
    eq.sort(key=digest)
    return eq, residual


def _battery(aggs) -> tuple[list[AggExpr], list[dict]]:
    """Aggregates to precompute: per SUM both the sum and its non-null
    count, per COUNT the non-null count, plus one COUNT(*) for all."""
    battery, layout = [], []
    for i, (kind, arg) in enumerate(aggs):
        if kind == SUM:
            battery.append(AggExpr("sum", arg, f"s{i}"))
            battery.append(AggExpr("count", arg, f"n{i}"))
            layout.append({"kind": SUM, "sum": f"s{i}", "nn": f"n{i}"})
        elif kind == COUNT:
            battery.append(AggExpr("count", arg, f"n{i}"))
            layout.append({"kind": COUNT, "nn": f"n{i}"})
        else:
            layout.append({"kind": COUNT_STAR})
    battery.append(AggExpr("count_star", None, "cs"))
    return battery, layout


class DomainNegation(Accelerator):
    accel_id = "domain_negation"
    midplan = False

    def template(self) -> PlanTemplate:
        source = Alternation("source", (
            TreeToken("Filter", (
                TypedVariable("input", "table_expr", INSTANTIATION_TIME),
                TypedVariable("pred", BOOL_EXPR, RUN_TIME))),
            TreeToken("LeftJoin", (
                TypedVariable("left", "table_expr", INSTANTIATION_TIME),
                TypedVariable("right", "table_expr", INSTANTIATION_TIME),
                TypedVariable("join_pred", BOOL_EXPR, RUN_TIME))),
        ))
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
                                            (TypedVariable("sum_arg",
                                                           COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  TreeToken("Agg.count",
                                            (TypedVariable("count_arg",
                                                           COLUMN_EXPR,
                                                           INSTANTIATION_TIME),)),
                                  LeafToken("Agg.count_star"),
                              )), Hole("a"))),
                          LeafToken("Aggs.nil"), "a")
        root = TreeToken("GroupByAgg", (source, keys, aggs))
        return PlanTemplate(self.accel_id, root, validator=self._valid)

    # --- validation ---

    def _valid(self, inst: Instantiation, catalog: Catalog) -> bool:
        try:
            p = _params(inst)
            if p.source == 0:
                if p.input_plan is None:
                    return False
                fields = output_schema(p.input_plan, catalog)
                names = {f.name for f in fields}
                env = TypeEnv(fields)
                if not set(p.keys) <= names:
                    return False
                if p.predicate is not None \
                        and not expr_columns(p.predicate) <= names:
                    return False
                return self._aggs_ok(p.aggs, env, right_names=None)
            if p.left is None or p.right is None or p.predicate is None:
                return False
            lf = output_schema(p.left, catalog)
            rf = output_schema(p.right, catalog)
            lnames = {f.name for f in lf}
            rnames = {f.name for f in rf}
            if lnames & rnames:
                return False
            if not set(p.keys) <= lnames:
                return False  # groups must be preserved by the outer join
            eq, _ = _split_join_condition(p.predicate, lnames, rnames)
            if not eq:
                return False
            if not expr_columns(p.predicate) <= (lnames | rnames):
                return False
            env = TypeEnv(lf + [Field(f.name, f.ctype, True) for f in rf])
            return self._aggs_ok(p.aggs, env, right_names=rnames)
        except QaccelError:
            return False

    def _aggs_ok(self, aggs, env: TypeEnv, right_names) -> bool:
        for kind, arg in aggs:
            if kind not in (SUM, COUNT, COUNT_STAR):
                return False
            if kind == COUNT_STAR:
                if right_names is not None:
                    return False  # null-extended rows break the subtraction
                continue
            cols = expr_columns(arg)
            for c in cols:
                if not env.has(c):
                    return False
            if right_names is not None and not (cols & right_names):
                return False
            t, _ = expr_type(arg, env)
            if kind == SUM and t.kind not in (Kind.INT, Kind.DECIMAL):
                return False  # exactness of the subtraction
        return True

    def derived_bindings(self, inst: Instantiation) -> dict:
        p = _params(inst)
        if p.source != 1 or p.predicate is None:
            return {}
        lnames = self._side_names(p.left)
        rnames = self._side_names(p.right)
        eq, _ = _split_join_condition(p.predicate, lnames, rnames)
        return {"eq_part": conjoin(eq)}

    @staticmethod
    def _side_names(plan) -> set:
        from ..plan import plan_column_refs, walk_plan, Project, GroupByAgg
        # without a catalog here, approximate by the columns the plan surfaces;
        # exact checks happen in the validator with the catalog present
        names = set()
        for node in walk_plan(plan):
            if isinstance(node, Project):
                names |= set(node.aliases)
            if isinstance(node, GroupByAgg):
                names |= set(node.key_names) | {a.alias for a in node.aggs}
        names |= plan_column_refs(plan)
        return names

    # --- fragments ---

    def fragment_plan(self, inst: Instantiation) -> LogicalPlan:
        p = _params(inst)
        aggs = tuple(self._agg_expr(kind, arg, i)
                     for i, (kind, arg) in enumerate(p.aggs))
        keys = tuple(ColumnRef(k) for k in p.keys)
        if p.source == 0:
            child = Filter(p.input_plan, p.predicate)
        else:
            child = LeftJoin(p.left, p.right, p.predicate)
        return GroupByAgg(child, keys, tuple(p.keys), aggs)

    @staticmethod
    def _agg_expr(kind, arg, i) -> AggExpr:
        if kind == SUM:
            return AggExpr("sum", arg, f"agg{i}")
        if kind == COUNT:
            return AggExpr("count", arg, f"agg{i}")
        return AggExpr("count_star", None, f"agg{i}")

    def estimate_state_bytes(self, inst: Instantiation, catalog: Catalog) -> int:
        from ..cardinality import estimate_cardinality
        p = _params(inst)
        source = p.input_plan if p.source == 0 else \
            LeftJoin(p.left, p.right, p.predicate)
        groups = estimate_cardinality(
            GroupByAgg(source, tuple(ColumnRef(k) for k in p.keys),
                       tuple(p.keys), ()), catalog)
        battery, _ = _battery(p.aggs)
        return groups * (9 * len(p.keys) + 9 * (len(battery)) + 8) + 256

    # --- build / run ---

    def build(self, inst: Instantiation, ctx: AccelContext):
        p = _params(inst)
        for kind, _ in p.aggs:
            if kind not in (SUM, COUNT, COUNT_STAR):
                raise UnsupportedAggregate("domain negation supports SUM/COUNT")
        battery, layout = _battery(p.aggs)
        keys = tuple(ColumnRef(k) for k in p.keys)
        if p.source == 0:
            totals_input = p.input_plan
            eq_part = None
        else:
            lnames = {f.name for f in output_schema(p.left, ctx.catalog)}
            rnames = {f.name for f in output_schema(p.right, ctx.catalog)}
            eq, _ = _split_join_condition(p.predicate, lnames, rnames)
            eq_part = conjoin(eq)
            totals_input = LeftJoin(p.left, p.right, eq_part)
        totals_plan = GroupByAgg(totals_input, keys, tuple(p.keys),
                                 tuple(battery))
        totals = ctx.adapter.submit(unparse(totals_plan))
        return {
            "totals": totals,
            "layout": layout,
            "eq_part": None if eq_part is None else digest(eq_part),
            "generation": ctx.generation,
        }

    def run(self, state, inst: Instantiation, input_batch,
            ctx: AccelContext) -> ColumnarBatch:
        if state["generation"] != ctx.generation:
            raise StaleState("domain negation totals predate a data reload")
        p = _params(inst)
        battery, layout = _battery(p.aggs)
        keys = tuple(ColumnRef(k) for k in p.keys)
        if p.source == 0:
            negated_child = Filter(p.input_plan, is_not_true(p.predicate))
        else:
            lnames = {f.name for f in output_schema(p.left, ctx.catalog)}
            rnames = {f.name for f in output_schema(p.right, ctx.catalog)}
            eq, residual = _split_join_condition(p.predicate, lnames, rnames)
            eq_part = conjoin(eq)
            if digest(eq_part) != state["eq_part"]:
                raise QaccelError(
                    "join keys of this query do not match the built totals")
            negated_child = LeftJoin(p.left, p.right,
                                     conjoin([eq_part,
                                              is_not_true(conjoin(residual))]))
        negated_plan = GroupByAgg(negated_child, keys, tuple(p.keys),
                                  tuple(battery))
        negated = ctx.adapter.submit(unparse(negated_plan))
        return self._subtract(state["totals"], negated, p, layout,
                              drop_empty=(p.source == 0))

    def _subtract(self, totals: ColumnarBatch, negated: ColumnarBatch,
                  p: Params, layout, drop_empty: bool) -> ColumnarBatch:
        nk = len(p.keys)
        tcodes, ncodes = joint_key_codes(
            key_columns(totals, p.keys) if nk else [],
            key_columns(negated, p.keys) if nk else [])
        if nk == 0:
            idx = np.zeros(totals.num_rows, dtype=np.int64) \
                if negated.num_rows else -np.ones(totals.num_rows, dtype=np.int64)
        else:
            idx = align_by_key(tcodes, ncodes)
        matched = idx >= 0
        safe = np.where(matched, idx, 0)

        def col_pair(batch, name):
            payload, valid = batch.column(name)
            return payload, valid

        def neg_values(name, dtype):
            if negated.num_rows == 0:
                return np.zeros(totals.num_rows, dtype=dtype)
            payload, valid = col_pair(negated, name)
            vals = np.where(valid[safe], payload[safe], 0)
            return np.where(matched, vals, 0).astype(dtype)

        t_cs, _ = col_pair(totals, "cs")
        n_cs = neg_values("cs", np.int64)
        true_cs = t_cs - n_cs

        out_schema = []
        out_cols = []
        out_vals = []
        for i, k in enumerate(p.keys):
            f = totals.schema[i]
            out_schema.append(f)
            out_cols.append(totals.columns[i])
            out_vals.append(totals.valid[i])

        for i, entry in enumerate(layout):
            kind = entry["kind"]
            if kind == COUNT_STAR:
                cs_type = totals.schema[totals.column_index("cs")].ctype
                out_schema.append(Field(f"agg{i}", cs_type, False))
                out_cols.append(true_cs.astype(np.int64))
                out_vals.append(np.ones(totals.num_rows, dtype=bool))
                continue
            t_nn, _ = col_pair(totals, entry["nn"])
            n_nn = neg_values(entry["nn"], np.int64)
            true_nn = t_nn - n_nn
            if kind == COUNT:
                out_schema.append(Field(
                    f"agg{i}",
                    totals.schema[totals.column_index(entry["nn"])].ctype,
                    False))
                out_cols.append(true_nn.astype(np.int64))
                out_vals.append(np.ones(totals.num_rows, dtype=bool))
            else:
                si = totals.column_index(entry["sum"])
                t_s_payload, t_s_valid = totals.columns[si], totals.valid[si]
                t_s = np.where(t_s_valid, t_s_payload, 0)
                n_s = neg_values(entry["sum"], t_s_payload.dtype)
                out_schema.append(Field(f"agg{i}", totals.schema[si].ctype,
                                        True))
                out_cols.append((t_s - n_s).astype(t_s_payload.dtype))
                out_vals.append(true_nn > 0)

        batch = ColumnarBatch(out_schema, out_cols, out_vals, totals.num_rows)
        if drop_empty and p.keys:
            # grouped: a group exists only when some row passed the filter;
            # keyless aggregation always produces its single row
            batch = batch.mask(true_cs > 0)
        return batch
