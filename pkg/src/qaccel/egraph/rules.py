"""Rewrite rules and the equality-saturation loop.

Every rule must preserve results row-for-row; the test suite checks each
rule against the reference executor on fixtures.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..plan import expr_columns
from ..schema import output_schema
from .core import EGraph
from .terms import decode_expr, decode_plan

# --- patterns -------------------------------------------------------------


@dataclass(frozen=True)
class PVar:
    name: str


@dataclass(frozen=True)
class PNode:
    label: str
    children: tuple
    payload_var: str | None = None  # binds the node payload when set


def _match(pat, cid: int, g: EGraph, subst: dict):
    if isinstance(pat, PVar):
        cid = g.find(cid)
        bound = subst.get(pat.name)
        if bound is None:
            s = dict(subst)
            s[pat.name] = cid
            yield s
        elif g.find(bound) == cid:
            yield subst
        return
    for node in g.nodes_of(cid):
        if node.label != pat.label or len(node.children) != len(pat.children):
            continue
        s0 = dict(subst)
        if pat.payload_var is not None:
            if pat.payload_var in s0 and s0[pat.payload_var] != node.payload:
                continue
            s0[pat.payload_var] = node.payload
        stack = [s0]
        for cpat, cchild in zip(pat.children, node.children):
            nxt = []
            for s in stack:
                nxt.extend(_match(cpat, cchild, g, s))
            stack = nxt
            if not stack:
                break
        yield from stack


def _instantiate(pat, g: EGraph, subst: dict) -> int:
    if isinstance(pat, PVar):
        return g.find(subst[pat.name])
    kids = tuple(_instantiate(c, g, subst) for c in pat.children)
    payload = subst[pat.payload_var] if pat.payload_var is not None else None
    return g.add_enode(pat.label, payload, kids)


@dataclass
class RewriteRule:
    name: str
    lhs: object
    rhs: object
    condition: object = None  # fn(subst, ctx) -> bool

    def search(self, g: EGraph):
        hits = []
        for cid in g.classes():
            for subst in _match(self.lhs, cid, g, {}):
                hits.append((subst, cid))
        return hits


class RuleContext:
    """Caches for side conditions during one saturation iteration."""

    def __init__(self, g: EGraph, catalog):
        self.g = g
        self.catalog = catalog
        self._sizes = None
        self._schema_cache = {}
        self._cols_cache = {}

    def sizes(self):
        if self._sizes is None:
            self._sizes = self.g.tree_sizes()
        return self._sizes

    def schema_names(self, cid: int) -> set | None:
        """Output column names for a plan class, via its representative tree."""
        cid = self.g.find(cid)
        if cid not in self._schema_cache:
            try:
                term = self.g.extract_smallest_term(cid, self.sizes())
                plan = decode_plan(term)
                fields = output_schema(plan, self.catalog)
                self._schema_cache[cid] = {f.name for f in fields}
            except Exception:
                self._schema_cache[cid] = None
        return self._schema_cache[cid]

    def expr_cols(self, cid: int) -> set | None:
        cid = self.g.find(cid)
        if cid not in self._cols_cache:
            try:
                term = self.g.extract_smallest_term(cid, self.sizes())
                self._cols_cache[cid] = expr_columns(decode_expr(term))
            except Exception:
                self._cols_cache[cid] = None
        return self._cols_cache[cid]


def _cols_within(pred_var: str, plan_var: str):
    def cond(subst, ctx: RuleContext) -> bool:
        cols = ctx.expr_cols(subst[pred_var])
        names = ctx.schema_names(subst[plan_var])
        return cols is not None and names is not None and cols <= names
    return cond


def _pure_column_projection(payload_var: str, exprs_vars, pred_var: str):
    """Project is a plain column selection whose aliases equal the names and
    the predicate only uses those columns."""
    def cond(subst, ctx: RuleContext) -> bool:
        aliases = subst[payload_var]
        names = []
        for v in exprs_vars:
            term_cols = ctx.expr_cols(subst[v])
            cid = ctx.g.find(subst[v])
            refs = [n for n in ctx.g.nodes_of(cid) if n.label == "ColumnRef"]
            if not refs:
                return False
            names.append(refs[0].payload)
        if tuple(aliases) != tuple(names):
            return False
        pcols = ctx.expr_cols(subst[pred_var])
        return pcols is not None and pcols <= set(names)
    return cond


def default_rules() -> list[RewriteRule]:
    x, p, q, r = PVar("x"), PVar("p"), PVar("q"), PVar("r")
    a, b = PVar("a"), PVar("b")
    flt = lambda c, pr: PNode("Filter", (c, pr))
    ij = lambda l, r_, c: PNode("InnerJoin", (l, r_, c))
    lj = lambda l, r_, c: PNode("LeftJoin", (l, r_, c))
    land = lambda l, r_: PNode("And", (l, r_))
    return [
        RewriteRule("filter-merge", flt(flt(x, p), q), flt(x, land(p, q))),
        RewriteRule("filter-split", flt(x, land(p, q)), flt(flt(x, p), q)),
        RewriteRule("and-comm", land(p, q), land(q, p)),
        RewriteRule("and-assoc", land(land(p, q), r), land(p, land(q, r))),
        RewriteRule("join-comm", ij(a, b, p), ij(b, a, p)),
        RewriteRule("filter-pushdown-inner",
                    flt(ij(a, b, q), p), ij(flt(a, p), b, q),
                    condition=_cols_within("p", "a")),
        RewriteRule("filter-pullup-inner",
                    ij(flt(a, p), b, q), flt(ij(a, b, q), p)),
        # a conjunct touching only the preserved-side-opposite (right) input
        # moves between the ON clause and a filter under the left join
        RewriteRule("leftjoin-on-push",
                    lj(a, b, land(p, q)), lj(a, flt(b, q), p),
                    condition=_cols_within("q", "b")),
        RewriteRule("leftjoin-filter-merge",
                    lj(a, flt(b, q), p), lj(a, b, land(p, q))),
    ]


def project_filter_swap_rule() -> RewriteRule:
    # narrow form: single-column pass-through projection
    x, p, e = PVar("x"), PVar("p"), PVar("e")
    lhs = PNode("Filter", (PNode("Project", (x, e), payload_var="al"), p))
    rhs = PNode("Project", (PNode("Filter", (x, p)), e), payload_var="al")
    return RewriteRule("project-filter-swap", lhs, rhs,
                       condition=_pure_column_projection("al", ["e"], "p"))


@dataclass
class SaturationResult:
    iterations: int
    reached_fixpoint: bool
    limit_hit: bool
    node_count: int


def saturate(g: EGraph, rules: list[RewriteRule], catalog,
             node_limit: int = 10_000, iter_limit: int = 20) -> SaturationResult:
    """Apply rules to fixpoint or until a resource cap trips.

    Hitting a cap is a normal, flagged outcome; matching proceeds on the
    partially saturated graph.
    """
    for it in range(1, iter_limit + 1):
        ctx = RuleContext(g, catalog)
        matches = []
        for rule in rules:
            for subst, cid in rule.search(g):
                if rule.condition is not None and not rule.condition(subst, ctx):
                    continue
                matches.append((rule, subst, cid))
        changed = False
        for rule, subst, cid in matches:
            new_id = _instantiate(rule.rhs, g, subst)
            changed |= g.union(cid, new_id)
        g.rebuild()
        if not changed:
            return SaturationResult(it, True, False, g.node_count())
        if g.node_count() >= node_limit:
            return SaturationResult(it, False, True, g.node_count())
    return SaturationResult(iter_limit, False, True, g.node_count())
