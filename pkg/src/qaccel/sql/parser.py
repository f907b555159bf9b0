"""Recursive-descent parser for the supported SQL subset.

Subset: SELECT list with expressions/aggregates/aliases, FROM over base
tables and parenthesized derived tables, INNER/LEFT JOIN ... ON, WHERE,
GROUP BY, ORDER BY, LIMIT.  Keywords are case-insensitive and identifiers
are lowercased.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import (ResolutionError, SqlSyntaxError,
                      UnsupportedFeature)
from ..plan import (AggExpr, And, Arith, Between, ColumnRef, Compare, Filter,
                    GroupByAgg, InnerJoin, IsNull, LeftJoin, Like, Limit,
                    Literal, LogicalPlan, Not, Or, Project, ScalarExpr, Scan,
                    Sort)
from ..schema import output_schema
from ..types import (BOOL, DATE, INT, REAL, STRING, Catalog, ColumnType,
                     Kind, date_to_days)

KEYWORDS = {
    "select", "from", "where", "group", "by", "order", "limit", "join",
    "inner", "left", "outer", "on", "as", "and", "or", "not", "between",
    "like", "is", "null", "true", "false", "date", "asc", "desc", "nulls",
    "first", "last", "having", "union", "except", "intersect", "distinct",
}

AGG_NAMES = {"count", "sum", "avg", "min", "max"}

SYMBOLS = ["<>", "!=", "<=", ">=", "<", ">", "=", "(", ")", ",", ".", "+",
           "-", "*", "/"]


@dataclass
class Token:
    kind: str       # kw ident number string qmark sym eof
    text: str
    pos: int


def tokenize(sql: str) -> list[Token]:
    toks = []
    i, n = 0, len(sql)
    while i < n:
        c = sql[i]
        if c.isspace():
            i += 1
            continue
        if sql.startswith("--", i):
            j = sql.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if c == "'":
            j = i + 1
            buf = []
            while True:
                if j >= n:
                    raise SqlSyntaxError("unterminated string literal", position=i)
                if sql[j] == "'":
                    if j + 1 < n and sql[j + 1] == "'":
                        buf.append("'")
                        j += 2
                        continue
                    break
                buf.append(sql[j])
                j += 1
            toks.append(Token("string", "".join(buf), i))
            i = j + 1
            continue
        if c.isdigit():
            j = i
            seen_dot = False
            while j < n and (sql[j].isdigit() or (sql[j] == "." and not seen_dot
                             and j + 1 < n and sql[j + 1].isdigit())):
                if sql[j] == ".":
                    seen_dot = True
                j += 1
            toks.append(Token("number", sql[i:j], i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (sql[j].isalnum() or sql[j] == "_"):
                j += 1
            word = sql[i:j].lower()
            toks.append(Token("kw" if word in KEYWORDS else "ident", word, i))
            i = j
            continue
        if c == "?":
            j = i + 1
            while j < n and sql[j].isdigit():
                j += 1
            if j == i + 1:
                raise SqlSyntaxError("expected digits after '?'", position=i)
            toks.append(Token("qmark", sql[i + 1:j], i))
            i = j
            continue
        for sym in SYMBOLS:
            if sql.startswith(sym, i):
                toks.append(Token("sym", "<>" if sym == "!=" else sym, i))
                i += len(sym)
                break
        else:
            raise SqlSyntaxError(f"unexpected character {c!r}", position=i)
    toks.append(Token("eof", "", n))
    return toks


def _binding_literal(value) -> Literal:
    if isinstance(value, dict):
        t = value.get("t")
        v = value.get("v")
        if t == "date":
            return Literal(date_to_days(v), DATE)
        if t == "decimal":
            scale = int(value.get("scale", 0))
            return Literal(int(round(float(v) * 10 ** scale)),
                           ColumnType(Kind.DECIMAL, scale))
        raise UnsupportedFeature(f"unknown binding type {t!r}")
    if isinstance(value, bool):
        return Literal(value, BOOL)
    if isinstance(value, int):
        return Literal(value, INT)
    if isinstance(value, float):
        return Literal(value, REAL)
    if isinstance(value, str):
        return Literal(value, STRING)
    raise UnsupportedFeature(f"cannot bind placeholder value {value!r}")


class _Parser:
    def __init__(self, sql: str, catalog: Catalog, bindings: dict | None):
        self.sql = sql
        self.toks = tokenize(sql)
        self.pos = 0
        self.catalog = catalog
        self.bindings = bindings or {}
        self._derived_counter = 0

    # --- token plumbing ---

    def peek(self) -> Token:
        return self.toks[self.pos]

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at_kw(self, *words) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.text in words

    def eat_kw(self, word) -> bool:
        if self.at_kw(word):
            self.next()
            return True
        return False

    def expect_kw(self, word):
        if not self.eat_kw(word):
            t = self.peek()
            raise SqlSyntaxError(f"expected {word.upper()}, got {t.text!r}",
                                 position=t.pos, expected=[word])

    def at_sym(self, s) -> bool:
        t = self.peek()
        return t.kind == "sym" and t.text == s

    def eat_sym(self, s) -> bool:
        if self.at_sym(s):
            self.next()
            return True
        return False

    def expect_sym(self, s):
        if not self.eat_sym(s):
            t = self.peek()
            raise SqlSyntaxError(f"expected {s!r}, got {t.text!r}",
                                 position=t.pos, expected=[s])

    def expect_ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise SqlSyntaxError(f"expected identifier, got {t.text!r}",
                                 position=t.pos, expected=["identifier"])
        return self.next().text

    # --- entry ---

    def parse_query(self) -> LogicalPlan:
        plan = self.parse_select()
        t = self.peek()
        if t.kind != "eof":
            if t.kind == "kw" and t.text in ("union", "except", "intersect"):
                raise UnsupportedFeature(f"set operation {t.text.upper()}")
            raise SqlSyntaxError(f"unexpected trailing token {t.text!r}",
                                 position=t.pos)
        return plan

    def parse_select(self) -> LogicalPlan:
        self.expect_kw("select")
        if self.eat_kw("distinct"):
            raise UnsupportedFeature("SELECT DISTINCT")
        items = self.parse_select_list()
        self.expect_kw("from")
        plan, scopes = self.parse_from()
        if self.eat_kw("where"):
            pred = self.parse_expr(scopes)
            plan = Filter(plan, pred)
        group_keys = None
        if self.at_kw("group"):
            self.next()
            self.expect_kw("by")
            group_keys = [self.parse_expr(scopes)]
            while self.eat_sym(","):
                group_keys.append(self.parse_expr(scopes))
        if self.at_kw("having"):
            raise UnsupportedFeature("HAVING")
        plan = self.apply_select(plan, items, group_keys, scopes)
        if self.at_kw("order"):
            self.next()
            self.expect_kw("by")
            plan = self.parse_order(plan, scopes)
        if self.eat_kw("limit"):
            t = self.peek()
            if t.kind != "number" or "." in t.text:
                raise SqlSyntaxError("expected integer after LIMIT",
                                     position=t.pos)
            self.next()
            plan = Limit(plan, int(t.text))
        return plan

    # --- select list ---

    def parse_select_list(self):
        if self.at_sym("*"):
            self.next()
            return "*"
        items = []
        while True:
            expr = self.parse_select_item(allow_agg=True)
            alias = None
            if self.eat_kw("as"):
                alias = self.expect_ident()
            elif self.peek().kind == "ident":
                alias = self.next().text
            items.append((expr, alias))
            if not self.eat_sym(","):
                return items

    def parse_select_item(self, allow_agg: bool):
        t = self.peek()
        if t.kind == "ident" and t.text in AGG_NAMES \
                and self.toks[self.pos + 1].kind == "sym" \
                and self.toks[self.pos + 1].text == "(":
            if not allow_agg:
                raise UnsupportedFeature("nested aggregate")
            name = self.next().text
            self.expect_sym("(")
            if self.eat_kw("distinct"):
                raise UnsupportedFeature("DISTINCT aggregates")
            if name == "count" and self.at_sym("*"):
                self.next()
                self.expect_sym(")")
                return ("agg", "count_star", None)
            arg = self.parse_expr(None)
            self.expect_sym(")")
            return ("agg", name, arg)
        return ("expr", None, self.parse_expr(None))

    # --- FROM / joins ---

    def parse_from(self):
        plan, names = self.parse_table_factor()
        scopes = set(names)
        while True:
            if self.eat_sym(","):
                right, rnames = self.parse_table_factor()
                scopes |= rnames
                plan = InnerJoin(plan, right, Literal(True, BOOL))
                continue
            outer = False
            if self.at_kw("inner"):
                self.next()
                self.expect_kw("join")
            elif self.at_kw("left"):
                self.next()
                self.eat_kw("outer")
                self.expect_kw("join")
                outer = True
            elif self.at_kw("join"):
                self.next()
            else:
                break
            right, rnames = self.parse_table_factor()
            scopes |= rnames
            self.expect_kw("on")
            cond = self.parse_expr(scopes)
            plan = LeftJoin(plan, right, cond) if outer \
                else InnerJoin(plan, right, cond)
        return plan, scopes

    def parse_table_factor(self):
        if self.eat_sym("("):
            sub = self.parse_select()
            self.expect_sym(")")
            self.eat_kw("as")
            alias = self.expect_ident()
            if self.eat_sym("("):
                renames = [self.expect_ident()]
                while self.eat_sym(","):
                    renames.append(self.expect_ident())
                self.expect_sym(")")
                schema = output_schema(sub, self.catalog)
                if len(renames) != len(schema):
                    raise ResolutionError(
                        f"derived table {alias!r} renames {len(renames)} columns "
                        f"but produces {len(schema)}")
                sub = Project(sub, tuple(ColumnRef(f.name) for f in schema),
                              tuple(renames))
            return sub, {alias}
        t = self.peek()
        if t.kind != "ident":
            raise SqlSyntaxError(f"expected table name, got {t.text!r}",
                                 position=t.pos, expected=["table name"])
        name = self.next().text
        if not self.catalog.has_table(name):
            raise ResolutionError(f"unknown table {name!r}")
        alias = None
        if self.eat_kw("as"):
            alias = self.expect_ident()
        elif self.peek().kind == "ident":
            alias = self.next().text
        return Scan(name), {alias or name, name}

    # --- expressions (precedence: OR < AND < NOT < comparison < add < mul) ---

    def parse_expr(self, scopes) -> ScalarExpr:
        return self.parse_or(scopes)

    def parse_or(self, scopes) -> ScalarExpr:
        left = self.parse_and(scopes)
        while self.eat_kw("or"):
            left = Or(left, self.parse_and(scopes))
        return left

    def parse_and(self, scopes) -> ScalarExpr:
        left = self.parse_not(scopes)
        while self.eat_kw("and"):
            left = And(left, self.parse_not(scopes))
        return left

    def parse_not(self, scopes) -> ScalarExpr:
        if self.eat_kw("not"):
            return Not(self.parse_not(scopes))
        return self.parse_comparison(scopes)

    def parse_comparison(self, scopes) -> ScalarExpr:
        left = self.parse_additive(scopes)
        t = self.peek()
        if t.kind == "sym" and t.text in ("=", "<>", "<", "<=", ">", ">="):
            op = self.next().text
            return Compare(op, left, self.parse_additive(scopes))
        negated = False
        if self.at_kw("not"):
            nxt = self.toks[self.pos + 1]
            if nxt.kind == "kw" and nxt.text in ("between", "like"):
                self.next()
                negated = True
        if self.eat_kw("between"):
            lo = self.parse_additive(scopes)
            self.expect_kw("and")
            hi = self.parse_additive(scopes)
            out = Between(left, lo, hi)
            return Not(out) if negated else out
        if self.eat_kw("like"):
            t = self.peek()
            if t.kind != "string":
                raise SqlSyntaxError("LIKE pattern must be a string literal",
                                     position=t.pos)
            self.next()
            return Like(left, t.text, negated)
        if self.eat_kw("is"):
            neg = self.eat_kw("not")
            if self.eat_kw("null"):
                return IsNull(left, negated=neg)
            t = self.peek()
            raise SqlSyntaxError(f"expected NULL after IS, got {t.text!r}",
                                 position=t.pos, expected=["null"])
        return left

    def parse_additive(self, scopes) -> ScalarExpr:
        left = self.parse_multiplicative(scopes)
        while True:
            if self.at_sym("+"):
                self.next()
                left = Arith("+", left, self.parse_multiplicative(scopes))
            elif self.at_sym("-"):
                self.next()
                left = Arith("-", left, self.parse_multiplicative(scopes))
            else:
                return left

    def parse_multiplicative(self, scopes) -> ScalarExpr:
        left = self.parse_unary(scopes)
        while True:
            if self.at_sym("*"):
                self.next()
                left = Arith("*", left, self.parse_unary(scopes))
            elif self.at_sym("/"):
                self.next()
                left = Arith("/", left, self.parse_unary(scopes))
            else:
                return left

    def parse_unary(self, scopes) -> ScalarExpr:
        if self.at_sym("-"):
            self.next()
            inner = self.parse_unary(scopes)
            if isinstance(inner, Literal) and inner.value is not None \
                    and inner.ctype.kind in (Kind.INT, Kind.REAL, Kind.DECIMAL):
                return Literal(-inner.value, inner.ctype)
            zero = Literal(0, INT)
            return Arith("-", zero, inner)
        return self.parse_primary(scopes)

    def parse_primary(self, scopes) -> ScalarExpr:
        t = self.peek()
        if t.kind == "sym" and t.text == "(":
            self.next()
            inner = self.parse_expr(scopes)
            self.expect_sym(")")
            return inner
        if t.kind == "number":
            self.next()
            if "." in t.text:
                whole, frac = t.text.split(".", 1)
                scale = len(frac)
                return Literal(int(whole or "0") * 10 ** scale + int(frac),
                               ColumnType(Kind.DECIMAL, scale))
            return Literal(int(t.text), INT)
        if t.kind == "string":
            self.next()
            return Literal(t.text, STRING)
        if t.kind == "qmark":
            self.next()
            key = t.text
            if key not in self.bindings and int(key) not in self.bindings:
                raise ResolutionError(f"unbound placeholder ?{key}")
            value = self.bindings.get(key, self.bindings.get(int(key)))
            return _binding_literal(value)
        if t.kind == "kw":
            if t.text == "null":
                self.next()
                return Literal(None, STRING)
            if t.text == "true":
                self.next()
                return Literal(True, BOOL)
            if t.text == "false":
                self.next()
                return Literal(False, BOOL)
            if t.text == "date":
                self.next()
                s = self.peek()
                if s.kind != "string":
                    raise SqlSyntaxError("expected string after DATE",
                                         position=s.pos)
                self.next()
                try:
                    return Literal(date_to_days(s.text), DATE)
                except ValueError:
                    raise SqlSyntaxError(f"bad date literal {s.text!r}",
                                         position=s.pos) from None
        if t.kind == "ident":
            name = self.next().text
            if self.at_sym("(") :
                raise UnsupportedFeature(f"function {name!r}")
            if self.at_sym("."):
                self.next()
                col = self.expect_ident()
                if scopes is not None and name not in scopes:
                    raise ResolutionError(f"unknown table qualifier {name!r}")
                return ColumnRef(col)
            return ColumnRef(name)
        raise SqlSyntaxError(f"unexpected token {t.text!r}", position=t.pos,
                             expected=["expression"])

    # --- ORDER BY ---

    def parse_order(self, plan: LogicalPlan, scopes) -> LogicalPlan:
        keys, asc, nf = [], [], []
        while True:
            e = self.parse_expr(scopes)
            keys.append(e)
            ascending = True
            if self.eat_kw("asc"):
                pass
            elif self.eat_kw("desc"):
                ascending = False
            nulls_first = not ascending  # engine default: nulls last when asc
            if self.eat_kw("nulls"):
                if self.eat_kw("first"):
                    nulls_first = True
                elif self.eat_kw("last"):
                    nulls_first = False
                else:
                    t = self.peek()
                    raise SqlSyntaxError("expected FIRST or LAST", position=t.pos)
            asc.append(ascending)
            nf.append(nulls_first)
            if not self.eat_sym(","):
                break
        return Sort(plan, tuple(keys), tuple(asc), tuple(nf))

    # --- SELECT shaping ---

    def apply_select(self, plan, items, group_keys, scopes):
        if items == "*":
            if group_keys is not None:
                raise UnsupportedFeature("GROUP BY with SELECT *")
            return plan
        has_agg = any(kind == "agg" for (kind, _, _), _ in items)
        if group_keys is None and not has_agg:
            exprs = tuple(e for (_, _, e), _ in items)
            aliases = tuple(a or self._default_name(e, i)
                            for i, ((_, _, e), a) in enumerate(items))
            return Project(plan, exprs, aliases)
        keys = tuple(group_keys or ())
        names = []
        for i, k in enumerate(keys):
            name = None
            for (kind, _, e), alias in items:
                if kind == "expr" and e == k and alias:
                    name = alias
                    break
            if name is None:
                name = k.name if isinstance(k, ColumnRef) else f"key{i + 1}"
            names.append(name)
        key_names = tuple(names)
        aggs = []
        agg_alias_of = {}
        for idx, ((kind, func, e), alias) in enumerate(items):
            if kind != "agg":
                continue
            name = alias or f"agg{len(aggs) + 1}"
            spec = AggExpr(func, e, name)
            aggs.append(spec)
            agg_alias_of[idx] = name
        gplan = GroupByAgg(plan, keys, key_names, tuple(aggs))
        # a projection restores the select-list order and naming when needed
        out_exprs, out_aliases = [], []
        for idx, ((kind, func, e), alias) in enumerate(items):
            if kind == "agg":
                out_exprs.append(ColumnRef(agg_alias_of[idx]))
                out_aliases.append(alias or agg_alias_of[idx])
            else:
                try:
                    ki = list(keys).index(e)
                except ValueError:
                    raise ResolutionError(
                        "non-aggregate select expression must appear in GROUP BY"
                    ) from None
                out_exprs.append(ColumnRef(key_names[ki]))
                out_aliases.append(alias or key_names[ki])
        natural = (len(items) == len(keys) + len(aggs)
                   and all(isinstance(e, ColumnRef) for e in out_exprs)
                   and [e.name for e in out_exprs] ==
                       list(key_names) + [a.alias for a in aggs]
                   and out_aliases == [e.name for e in out_exprs])
        if natural:
            return gplan
        return Project(gplan, tuple(out_exprs), tuple(out_aliases))

    def _default_name(self, e, i):
        if isinstance(e, ColumnRef):
            return e.name
        return f"col{i + 1}"


def parse(sql: str, catalog: Catalog, bindings: dict | None = None,
          validate: bool = True) -> LogicalPlan:
    """Parse SQL text into a well-typed logical plan."""
    plan = _Parser(sql, catalog, bindings).parse_query()
    if validate:
        from ..errors import TypeMismatch, UnknownColumn, UnknownTable
        try:
            output_schema(plan, catalog)
        except (UnknownColumn, UnknownTable, TypeMismatch) as exc:
            raise ResolutionError(str(exc)) from exc
    return plan
