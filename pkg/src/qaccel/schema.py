"""Static typing of expressions and plan output schemas."""

from __future__ import annotations

from .errors import QaccelError, TypeMismatch, UnknownColumn
from .plan import (AcceleratorCall, AggExpr, And, Arith, Between, ColumnRef,
                   Compare, Filter, GroupByAgg, InnerJoin, IsNull, LeftJoin,
                   Like, Limit, Literal, LogicalPlan, Not, Or, Project,
                   ScalarExpr, Scan, Sort)
from .types import BOOL, INT, REAL, Catalog, ColumnType, Field, Kind


def promote(a: ColumnType, b: ColumnType, op: str) -> ColumnType:
    """Result type of an arithmetic op over two operand types."""
    ka, kb = a.kind, b.kind
    if op == "/":
        if a.is_numeric and b.is_numeric:
            return REAL
        raise TypeMismatch(f"cannot divide {a!r} by {b!r}")
    if ka == Kind.DATE or kb == Kind.DATE:
        if ka == Kind.DATE and kb == Kind.DATE and op == "-":
            return INT
        if ka == Kind.DATE and kb == Kind.INT and op in "+-":
            return ColumnType(Kind.DATE)
        if ka == Kind.INT and kb == Kind.DATE and op == "+":
            return ColumnType(Kind.DATE)
        raise TypeMismatch(f"bad date arithmetic {a!r} {op} {b!r}")
    if not (a.is_numeric and b.is_numeric):
        raise TypeMismatch(f"non-numeric arithmetic {a!r} {op} {b!r}")
    if ka == Kind.REAL or kb == Kind.REAL:
        return REAL
    if ka == Kind.DECIMAL or kb == Kind.DECIMAL:
        sa = a.scale if ka == Kind.DECIMAL else 0
        sb = b.scale if kb == Kind.DECIMAL else 0
        if op == "*":
            return ColumnType(Kind.DECIMAL, sa + sb)
        return ColumnType(Kind.DECIMAL, max(sa, sb))
    return INT


def comparable(a: ColumnType, b: ColumnType) -> bool:
    if a.is_numeric and b.is_numeric:
        return True
    return a.kind == b.kind


class TypeEnv:
    """Column name -> Field for one plan scope."""

    def __init__(self, fields: list[Field]):
        self.fields = fields
        self._by_name = {}
        for f in fields:
            self._by_name.setdefault(f.name, f)

    def lookup(self, name: str) -> Field:
        f = self._by_name.get(name)
        if f is None:
            raise UnknownColumn(f"unresolved column {name!r}")
        return f

    def has(self, name: str) -> bool:
        return name in self._by_name


def expr_type(e: ScalarExpr, env: TypeEnv) -> tuple[ColumnType, bool]:
    """Type and nullability of an expression under a column environment."""
    if isinstance(e, ColumnRef):
        f = env.lookup(e.name)
        return f.ctype, f.nullable
    if isinstance(e, Literal):
        return e.ctype, e.value is None
    if isinstance(e, Arith):
        lt, ln = expr_type(e.left, env)
        rt, rn = expr_type(e.right, env)
        out = promote(lt, rt, e.op)
        # division can introduce nulls via divide-by-zero
        return out, ln or rn or e.op == "/"
    if isinstance(e, Compare):
        lt, ln = expr_type(e.left, env)
        rt, rn = expr_type(e.right, env)
        if not comparable(lt, rt):
            raise TypeMismatch(f"cannot compare {lt!r} with {rt!r}")
        return BOOL, ln or rn
    if isinstance(e, Between):
        et, en = expr_type(e.expr, env)
        lt, ln = expr_type(e.low, env)
        ht, hn = expr_type(e.high, env)
        if not (comparable(et, lt) and comparable(et, ht)):
            raise TypeMismatch("BETWEEN operands are not comparable")
        return BOOL, en or ln or hn
    if isinstance(e, Like):
        et, en = expr_type(e.expr, env)
        if et.kind != Kind.STRING:
            raise TypeMismatch("LIKE requires a string operand")
        return BOOL, en
    if isinstance(e, IsNull):
        expr_type(e.expr, env)
        return BOOL, False
    if isinstance(e, (And, Or)):
        lt, ln = expr_type(e.left, env)
        rt, rn = expr_type(e.right, env)
        if lt.kind != Kind.BOOL or rt.kind != Kind.BOOL:
            raise TypeMismatch("AND/OR requires boolean operands")
        return BOOL, ln or rn
    if isinstance(e, Not):
        et, en = expr_type(e.expr, env)
        if et.kind != Kind.BOOL:
            raise TypeMismatch("NOT requires a boolean operand")
        return BOOL, en
    raise QaccelError(f"untypable expression {e!r}")


def agg_type(a: AggExpr, env: TypeEnv) -> tuple[ColumnType, bool]:
    if a.func == "count_star":
        return INT, False
    at, _ = expr_type(a.arg, env)
    if a.func == "count":
        return INT, False
    if a.func == "avg":
        if not at.is_numeric:
            raise TypeMismatch("AVG requires a numeric argument")
        return REAL, True
    if a.func == "sum":
        if not at.is_numeric:
            raise TypeMismatch("SUM requires a numeric argument")
        return at, True
    if a.func in ("min", "max"):
        if not at.is_orderable:
            raise TypeMismatch(f"{a.func.upper()} requires an orderable argument")
        return at, True
    raise QaccelError(f"unknown aggregate {a.func!r}")


def output_schema(plan: LogicalPlan, catalog: Catalog,
                  accel_schemas: dict | None = None) -> list[Field]:
    """Names, types, and nullability of a plan's output columns.

    ``accel_schemas`` maps AcceleratorCall call ids to their output schema;
    plans containing such calls cannot be typed without it.
    """
    if isinstance(plan, Scan):
        return [c.as_field() for c in catalog.table(plan.table).columns]
    if isinstance(plan, Filter):
        child = output_schema(plan.child, catalog, accel_schemas)
        t, _ = expr_type(plan.predicate, TypeEnv(child))
        if t.kind != Kind.BOOL:
            raise TypeMismatch("filter predicate must be boolean")
        return child
    if isinstance(plan, Project):
        child = output_schema(plan.child, catalog, accel_schemas)
        env = TypeEnv(child)
        if len(plan.exprs) != len(plan.aliases):
            raise QaccelError("projection alias count mismatch")
        out = []
        for e, name in zip(plan.exprs, plan.aliases):
            t, n = expr_type(e, env)
            out.append(Field(name, t, n))
        return out
    if isinstance(plan, InnerJoin):
        left = output_schema(plan.left, catalog, accel_schemas)
        right = output_schema(plan.right, catalog, accel_schemas)
        combined = left + right
        t, _ = expr_type(plan.condition, TypeEnv(combined))
        if t.kind != Kind.BOOL:
            raise TypeMismatch("join condition must be boolean")
        return combined
    if isinstance(plan, LeftJoin):
        left = output_schema(plan.left, catalog, accel_schemas)
        right = output_schema(plan.right, catalog, accel_schemas)
        combined = left + right
        t, _ = expr_type(plan.condition, TypeEnv(combined))
        if t.kind != Kind.BOOL:
            raise TypeMismatch("join condition must be boolean")
        return left + [Field(f.name, f.ctype, True) for f in right]
    if isinstance(plan, GroupByAgg):
        child = output_schema(plan.child, catalog, accel_schemas)
        env = TypeEnv(child)
        if len(plan.keys) != len(plan.key_names):
            raise QaccelError("group-by key name count mismatch")
        out = []
        for e, name in zip(plan.keys, plan.key_names):
            t, n = expr_type(e, env)
            out.append(Field(name, t, n))
        for a in plan.aggs:
            t, n = agg_type(a, env)
            out.append(Field(a.alias, t, n))
        return out
    if isinstance(plan, Sort):
        child = output_schema(plan.child, catalog, accel_schemas)
        env = TypeEnv(child)
        for e in plan.keys:
            expr_type(e, env)
        return child
    if isinstance(plan, Limit):
        return output_schema(plan.child, catalog, accel_schemas)
    if isinstance(plan, AcceleratorCall):
        if accel_schemas is None or plan.call_id not in accel_schemas:
            raise QaccelError(
                f"no schema registered for accelerator call {plan.call_id!r}")
        return list(accel_schemas[plan.call_id])
    raise QaccelError(f"cannot type plan node {plan!r}")
