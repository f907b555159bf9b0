"""Plan -> SQL text, inverse of the parser over the supported subset."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import Unrepresentable
from ..plan import (AcceleratorCall, AggExpr, And, Arith, Between, ColumnRef,
                    Compare, Filter, GroupByAgg, InnerJoin, IsNull, LeftJoin,
                    Like, Limit, Literal, LogicalPlan, Not, Or, Project,
                    ScalarExpr, Scan, Sort)
from ..types import Kind, days_to_date


def _quote(s: str) -> str:
    return "'" + s.replace("'", "''") + "'"


def expr_sql(e: ScalarExpr) -> str:
    if isinstance(e, ColumnRef):
        return e.name
    if isinstance(e, Literal):
        if e.value is None:
            return "null"
        k = e.ctype.kind
        if k == Kind.STRING:
            return _quote(e.value)
        if k == Kind.DATE:
            return f"date {_quote(days_to_date(e.value))}"
        if k == Kind.BOOL:
            return "true" if e.value else "false"
        if k == Kind.DECIMAL:
            s = e.ctype.scale
            if s == 0:
                return str(e.value)
            sign = "-" if e.value < 0 else ""
            mag = abs(e.value)
            return f"{sign}{mag // 10**s}.{mag % 10**s:0{s}d}"
        return repr(e.value) if k == Kind.REAL else str(e.value)
    if isinstance(e, Arith):
        return f"({expr_sql(e.left)} {e.op} {expr_sql(e.right)})"
    if isinstance(e, Compare):
        return f"({expr_sql(e.left)} {e.op} {expr_sql(e.right)})"
    if isinstance(e, Between):
        return (f"({expr_sql(e.expr)} between {expr_sql(e.low)}"
                f" and {expr_sql(e.high)})")
    if isinstance(e, Like):
        op = "not like" if e.negated else "like"
        return f"({expr_sql(e.expr)} {op} {_quote(e.pattern)})"
    if isinstance(e, IsNull):
        op = "is not null" if e.negated else "is null"
        return f"({expr_sql(e.expr)} {op})"
    if isinstance(e, And):
        return f"({expr_sql(e.left)} and {expr_sql(e.right)})"
    if isinstance(e, Or):
        return f"({expr_sql(e.left)} or {expr_sql(e.right)})"
    if isinstance(e, Not):
        return f"(not {expr_sql(e.expr)})"
    raise Unrepresentable(f"cannot unparse expression {e!r}")


@dataclass
class _Block:
    select: list | None = None      # None means SELECT *
    from_sql: str = ""
    where: list = field(default_factory=list)
    group: list | None = None       # (key_sql, name) pairs
    agg_items: list = field(default_factory=list)
    order: str | None = None
    limit: int | None = None

    def fused_shape(self):
        return (self.select is not None, self.group is not None,
                self.order is not None, self.limit is not None)


class _Unparser:
    def __init__(self):
        self.counter = 0

    def alias(self) -> str:
        self.counter += 1
        return f"d{self.counter}"

    def factor(self, plan: LogicalPlan) -> str:
        if isinstance(plan, Scan):
            return plan.table
        return f"({self.query(plan)}) as {self.alias()}"

    def block(self, plan: LogicalPlan) -> _Block:
        if isinstance(plan, AcceleratorCall):
            raise Unrepresentable(
                "accelerator calls must be materialized before unparsing")
        if isinstance(plan, Scan):
            return _Block(from_sql=plan.table)
        if isinstance(plan, (InnerJoin, LeftJoin)):
            word = "left join" if isinstance(plan, LeftJoin) else "join"
            lf = self.factor(plan.left)
            rf = self.factor(plan.right)
            return _Block(from_sql=f"{lf} {word} {rf} on {expr_sql(plan.condition)}")
        if isinstance(plan, Filter):
            b = self.block(plan.child)
            if b.select is None and b.group is None and b.order is None \
                    and b.limit is None:
                b.where.append(expr_sql(plan.predicate))
                return b
            return _Block(from_sql=f"({self.render(b)}) as {self.alias()}",
                          where=[expr_sql(plan.predicate)])
        if isinstance(plan, Project):
            b = self.block(plan.child)
            items = [(expr_sql(e), a) for e, a in zip(plan.exprs, plan.aliases)]
            if b.select is None and b.group is None and b.order is None \
                    and b.limit is None:
                b.select = items
                return b
            return _Block(from_sql=f"({self.render(b)}) as {self.alias()}",
                          select=items)
        if isinstance(plan, GroupByAgg):
            b = self.block(plan.child)
            if not (b.select is None and b.group is None and b.order is None
                    and b.limit is None):
                b = _Block(from_sql=f"({self.render(b)}) as {self.alias()}")
            b.group = [(expr_sql(k), n) for k, n in zip(plan.keys, plan.key_names)]
            b.agg_items = [(self._agg_sql(a), a.alias) for a in plan.aggs]
            return b
        if isinstance(plan, Sort):
            b = self.block(plan.child)
            if b.order is not None or b.limit is not None:
                b = _Block(from_sql=f"({self.render(b)}) as {self.alias()}")
            parts = []
            for e, asc, nf in zip(plan.keys, plan.ascending, plan.nulls_first):
                dir_ = "asc" if asc else "desc"
                nulls = "nulls first" if nf else "nulls last"
                parts.append(f"{expr_sql(e)} {dir_} {nulls}")
            b.order = ", ".join(parts)
            return b
        if isinstance(plan, Limit):
            b = self.block(plan.child)
            if b.limit is not None:
                b = _Block(from_sql=f"({self.render(b)}) as {self.alias()}")
            b.limit = plan.n
            return b
        raise Unrepresentable(f"cannot unparse plan node {plan!r}")

    def _agg_sql(self, a: AggExpr) -> str:
        if a.func == "count_star":
            return "count(*)"
        return f"{a.func}({expr_sql(a.arg)})"

    def render(self, b: _Block) -> str:
        if b.group is not None:
            items = [f"{sql} as {name}" for sql, name in b.group]
            items += [f"{sql} as {name}" for sql, name in b.agg_items]
            select = ", ".join(items)
        elif b.select is not None:
            select = ", ".join(f"{sql} as {name}" for sql, name in b.select)
        else:
            select = "*"
        out = f"select {select} from {b.from_sql}"
        if b.where:
            out += " where " + " and ".join(b.where)
        if b.group:
            out += " group by " + ", ".join(sql for sql, _ in b.group)
        if b.order:
            out += " order by " + b.order
        if b.limit is not None:
            out += f" limit {b.limit}"
        return out

    def query(self, plan: LogicalPlan) -> str:
        return self.render(self.block(plan))


def unparse(plan: LogicalPlan) -> str:
    """Render a plan as SQL inside the supported subset.

    Round-trip contract: parse(unparse(p)) produces the same rows as p.
    """
    return _Unparser().query(plan)
