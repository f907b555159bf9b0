"""Training-data bootstrap: sample semantically valid instantiations from a
template, measure their run times, and emit a labeled dataset.

Sampling fixes the instance structure first (repetition counts geometric
with mean 2 capped at 4, alternation options uniform), then walks the
template bottom-up keeping track of the output columns in scope, drawing
variable values that resolve against that context.  Everything is a pure
function of (template, catalog, slice pool, seed).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ExhaustedRetries, QaccelError
from .plan import (And, Arith, Between, ColumnRef, Compare, InnerJoin,
                   LeftJoin, Literal, LogicalPlan, Or, digest, walk_plan)
from .schema import output_schema
from .sql import unparse
from .templates import (Alternation, Hole, Instantiation, LeafToken,
                        PlanTemplate, RepInstanceBinding, Repetition,
                        TreeToken, TypedVariable, instantiation_digest,
                        instantiation_from_json, instantiation_to_json)
from .templates.constructs import (COLUMN_EXPR, COLUMN_REF, RUN_TIME,
                                   TABLE_EXPR, TABLE_REF)
from .types import Catalog, Field, Kind

MAX_TRIES = 100
REP_MEAN = 2
REP_CAP = 4


def slice_workload(plans: list[LogicalPlan]) -> list[LogicalPlan]:
    """Every rooted subtree of every logged plan, structurally deduplicated."""
    seen = {}
    for plan in plans:
        for node in walk_plan(plan):
            seen.setdefault(digest(node), node)
    return [seen[k] for k in sorted(seen)]


def _literal_for(col: Field, value) -> Literal:
    k = col.ctype.kind
    if k == Kind.REAL:
        return Literal(float(value), col.ctype)
    if k == Kind.STRING:
        return Literal(str(value), col.ctype)
    return Literal(int(round(float(value))), col.ctype)


class _Sampler:
    def __init__(self, template: PlanTemplate, catalog: Catalog,
                 slices: list[LogicalPlan], rng: np.random.Generator):
        self.template = template
        self.catalog = catalog
        self.slices = slices
        self.rng = rng
        self.inst = Instantiation(template.name)

    # --- contexts ---

    def _schema(self, plan: LogicalPlan) -> list[Field] | None:
        try:
            return output_schema(plan, self.catalog)
        except QaccelError:
            return None

    def _reconstruct(self, construct, rep_binding) -> LogicalPlan | None:
        if isinstance(construct, TypedVariable):
            v = self._value(construct.name, rep_binding)
            return v if isinstance(v, LogicalPlan) else None
        if isinstance(construct, Alternation):
            opt = self._choice(construct.name, rep_binding)
            return self._reconstruct(construct.options[opt], rep_binding)
        if isinstance(construct, TreeToken):
            kids = construct.children
            if construct.label == "Filter":
                return self._reconstruct(kids[0], rep_binding)
            if construct.label in ("InnerJoin", "LeftJoin"):
                l = self._reconstruct(kids[0], rep_binding)
                r = self._reconstruct(kids[1], rep_binding)
                if l is not None and r is not None:
                    from .plan import TRUE
                    cls = InnerJoin if construct.label == "InnerJoin" \
                        else LeftJoin
                    return cls(l, r, TRUE)
            if construct.label == "GroupByAgg":
                return self._reconstruct(kids[0], rep_binding)
        return None

    def _value(self, name, rep_binding):
        if rep_binding is not None and name in rep_binding.variables:
            return rep_binding.variables[name]
        return self.inst.variables.get(name)

    def _choice(self, name, rep_binding):
        if rep_binding is not None and name in rep_binding.alternations:
            return rep_binding.alternations[name]
        return self.inst.alternations.get(name, 0)

    # --- variable sampling (one row of the method table per type) ---

    def _pick(self, seq):
        return seq[int(self.rng.integers(0, len(seq)))]

    def _catalog_column(self, name: str):
        for t in self.catalog.tables.values():
            for c in t.columns:
                if c.name == name:
                    return c
        return None

    def _sample_column(self, fields: list[Field], want_numeric=False,
                       want_orderable=False) -> Field | None:
        pool = fields
        if want_numeric:
            pool = [f for f in fields if f.ctype.is_numeric]
        elif want_orderable:
            pool = [f for f in fields
                    if f.ctype.is_orderable and f.ctype.kind != Kind.STRING]
        return self._pick(pool) if pool else None

    def _constant(self, col: Field):
        meta = self._catalog_column(col.name)
        if meta is not None and meta.quantiles:
            return _literal_for(col, self._pick(meta.quantiles))
        if meta is not None and meta.min_value is not None \
                and self.rng.random() < 0.5:
            return _literal_for(col, meta.min_value)
        if meta is not None and meta.max_value is not None:
            return _literal_for(col, meta.max_value)
        return _literal_for(col, 0 if col.ctype.kind != Kind.STRING else "")

    def _column_expr(self, fields: list[Field], depth=2):
        choice = int(self.rng.integers(0, 4))
        col = self._sample_column(fields, want_numeric=(choice > 0))
        if col is None:
            col = self._pick(fields)
            return ColumnRef(col.name)
        if choice == 0:
            return ColumnRef(col.name)
        op = self._pick(["+", "-", "*"])
        if choice == 1:
            return Arith(op, ColumnRef(col.name), self._constant(col))
        other = self._sample_column(fields, want_numeric=True)
        if choice == 2 or depth <= 1 or other is None:
            rhs = ColumnRef(other.name) if other is not None \
                else self._constant(col)
            return Arith(op, ColumnRef(col.name), rhs)
        inner = self._column_expr(fields, depth=1)
        return Arith(op, inner, ColumnRef(col.name))

    def _bool_expr(self, fields: list[Field], depth=1):
        choice = int(self.rng.integers(0, 4 if depth > 0 else 3))
        col = self._sample_column(fields, want_orderable=True)
        if col is None:
            eq_col = self._pick(fields)
            return Compare("=", ColumnRef(eq_col.name), self._constant(eq_col))
        if choice == 0:  # open range
            op = self._pick(["<", "<=", ">", ">="])
            return Compare(op, ColumnRef(col.name), self._constant(col))
        if choice == 1:  # closed range
            a, b = self._constant(col), self._constant(col)
            if a.value is not None and b.value is not None \
                    and a.value > b.value:
                a, b = b, a
            return Between(ColumnRef(col.name), a, b)
        if choice == 2:  # equality
            return Compare("=", ColumnRef(col.name), self._constant(col))
        pair = (self._bool_expr(fields, 0), self._bool_expr(fields, 0))
        return And(*pair) if self.rng.random() < 0.5 else Or(*pair)

    def _sample_variable(self, var: TypedVariable, rep_binding, ctx_plan):
        fields = self._schema(ctx_plan) if ctx_plan is not None else None
        if var.vtype == TABLE_REF:
            return self._pick(sorted(self.catalog.tables))
        if var.vtype == TABLE_EXPR:
            if not self.slices:
                raise ExhaustedRetries("empty slice pool")
            return self._pick(self.slices)
        if fields is None:
            table = self.catalog.table(self._pick(sorted(self.catalog.tables)))
            fields = [c.as_field() for c in table.columns]
        if var.vtype == COLUMN_REF:
            # favor low-cardinality columns: references mostly parameterize
            # group keys, and tiny domains are the interesting regime
            weights = []
            for f in fields:
                meta = self._catalog_column(f.name)
                d = meta.distinct if meta is not None and meta.distinct else 1000
                weights.append(1.0 / np.sqrt(max(d, 1)))
            probs = np.array(weights) / sum(weights)
            return fields[int(self.rng.choice(len(fields), p=probs))].name
        if var.vtype == COLUMN_EXPR:
            return self._column_expr(fields)
        return self._bool_expr(fields)

    # --- template walk ---

    def _walk(self, construct, rep_binding, ctx_plan):
        if isinstance(construct, (Hole, LeafToken)):
            return
        if isinstance(construct, TypedVariable):
            value = self._sample_variable(construct, rep_binding, ctx_plan)
            if rep_binding is not None:
                rep_binding.variables[construct.name] = value
            else:
                self.inst.variables[construct.name] = value
            return
        if isinstance(construct, TreeToken):
            kids = construct.children
            contexts = [ctx_plan] * len(kids)
            order = list(range(len(kids)))
            if construct.label == "Filter" and len(kids) == 2:
                self._walk(kids[0], rep_binding, ctx_plan)
                contexts[1] = self._reconstruct(kids[0], rep_binding) or ctx_plan
                self._walk(kids[1], rep_binding, contexts[1])
                return
            if construct.label in ("InnerJoin", "LeftJoin") and len(kids) == 3:
                self._walk(kids[0], rep_binding, ctx_plan)
                self._walk(kids[1], rep_binding, ctx_plan)
                contexts[2] = self._reconstruct(construct, rep_binding) \
                    or ctx_plan
                self._walk(kids[2], rep_binding, contexts[2])
                return
            if construct.label == "GroupByAgg":
                self._walk(kids[0], rep_binding, ctx_plan)
                inner = self._reconstruct(kids[0], rep_binding) or ctx_plan
                for k in kids[1:]:
                    self._walk(k, rep_binding, inner)
                return
            for k, c in zip(kids, contexts):
                self._walk(k, rep_binding, c)
            return
        if isinstance(construct, Alternation):
            opt = int(self.rng.integers(0, len(construct.options)))
            if rep_binding is not None:
                rep_binding.alternations[construct.name] = opt
            else:
                self.inst.alternations[construct.name] = opt
            self._walk(construct.options[opt], rep_binding, ctx_plan)
            return
        if isinstance(construct, Repetition):
            count = min(int(self.rng.geometric(1.0 / (REP_MEAN + 1))) - 1,
                        REP_CAP)
            bindings = []
            for _ in range(count):
                b = RepInstanceBinding()
                self._walk(construct.body, b, ctx_plan)
                bindings.append(b)
            self.inst.repetitions[construct.name] = bindings
            self._walk(construct.base, rep_binding, ctx_plan)
            return
        raise QaccelError(f"cannot sample construct {construct!r}")

    def sample(self) -> Instantiation:
        self.inst = Instantiation(self.template.name)
        self._walk(self.template.root, None, None)
        return self.inst


def generate_instance(accel, catalog: Catalog, slices: list[LogicalPlan],
                      rng: np.random.Generator,
                      max_tries: int = MAX_TRIES) -> Instantiation:
    """A validator-approved instantiation, or ExhaustedRetries if the
    validator keeps rejecting samples (an over-restrictive validator)."""
    template = accel.template()
    for _ in range(max_tries):
        sampler = _Sampler(template, catalog, slices, rng)
        try:
            inst = sampler.sample()
        except (ExhaustedRetries, QaccelError):
            raise
        except Exception:
            continue
        if accel.validate(inst, catalog):
            return inst
    raise ExhaustedRetries(
        f"{max_tries} samples rejected for {accel.accel_id}; "
        "the validator may be over-restrictive for this catalog")


def resample_runtime(accel, inst: Instantiation, catalog: Catalog,
                     rng: np.random.Generator) -> Instantiation:
    """Fresh values for run-time variables; instantiation-time parts kept."""
    template = accel.template()
    out = inst.merged(Instantiation(inst.template))
    sampler = _Sampler(template, catalog, [], rng)
    sampler.inst = out
    for var in template.variables():
        if var.resolution != RUN_TIME or var.name not in out.variables:
            continue
        ctx_plan = None
        if var.name == "pred":
            ctx_plan = out.variables.get("input")
        elif var.name == "join_pred":
            l, r = out.variables.get("left"), out.variables.get("right")
            if l is not None and r is not None:
                from .plan import TRUE
                ctx_plan = LeftJoin(l, r, TRUE)
        try:
            value = sampler._sample_variable(var, None, ctx_plan)
        except Exception:
            continue
        candidate = out.merged(Instantiation(inst.template,
                                             {var.name: value}))
        if accel.validate(candidate, catalog) and \
                accel.instance_digest(candidate) == accel.instance_digest(inst):
            out = candidate
    return out


# --- labeling ----------------------------------------------------------------


@dataclass
class LabeledInstance:
    inst: Instantiation
    seconds: float
    input_bytes: int


@dataclass
class LabelReport:
    labeled: list
    build_failures: list = field(default_factory=list)


def label_instances(accel, instances: list, ctx, rng: np.random.Generator,
                    repeats: int = 3, resample: bool = True) -> LabelReport:
    """Median of timed run() calls per instance; build failures are recorded
    and skipped, never fatal."""
    report = LabelReport(labeled=[])
    for inst in instances:
        try:
            state = accel.build(inst, ctx)
        except Exception as exc:
            report.build_failures.append((instantiation_digest(inst),
                                          f"{type(exc).__name__}: {exc}"))
            continue
        input_bytes = 0
        try:
            input_batch = None
            if accel.midplan:
                input_plan = inst.variables.get("input")
                input_batch = ctx.adapter.submit(unparse(input_plan))
                input_bytes = input_batch.payload_bytes()
            times = []
            for _ in range(repeats):
                run_inst = resample_runtime(accel, inst, ctx.catalog, rng) \
                    if resample else inst
                t0 = time.perf_counter()
                accel.run(state, run_inst, input_batch, ctx)
                times.append(max(time.perf_counter() - t0, 1e-6))
            seconds = float(np.median(times))
            report.labeled.append(LabeledInstance(inst, seconds, input_bytes))
        except Exception as exc:
            report.build_failures.append((instantiation_digest(inst),
                                          f"run: {type(exc).__name__}: {exc}"))
    return report


def write_dataset(path, labeled: list):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["digest", "instantiation", "seconds", "input_bytes"])
        for li in labeled:
            w.writerow([instantiation_digest(li.inst),
                        json.dumps(instantiation_to_json(li.inst)),
                        f"{li.seconds:.9f}", li.input_bytes])


def read_dataset(path) -> list:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(LabeledInstance(
                inst=instantiation_from_json(json.loads(row["instantiation"])),
                seconds=float(row["seconds"]),
                input_bytes=int(row["input_bytes"]),
            ))
    return out
