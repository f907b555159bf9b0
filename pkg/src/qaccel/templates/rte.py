"""Regular tree expressions: template lowering and a direct matcher.

The direct matcher defines the language; the compiled automaton
(``nfta.py``) must agree with it, which the test suite checks by
enumeration.  Typed variables lower to wildcard leaves that match any
subtree of the right sort.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..egraph.terms import BEXPR, PLAN, VEXPR, Term, label_sort
from ..errors import MalformedTemplate
from .constructs import (BOOL_EXPR, COLUMN_EXPR, COLUMN_REF, TABLE_EXPR,
                         TABLE_REF, Alternation, Hole, LeafToken, PlanTemplate,
                         Repetition, TreeToken, TypedVariable)


@dataclass(frozen=True)
class RLeaf:
    label: str
    origin: int | None = None


@dataclass(frozen=True)
class RWild:
    vtype: str
    origin: int | None = None


@dataclass(frozen=True)
class RNode:
    label: str
    children: tuple
    origin: int | None = None


@dataclass(frozen=True)
class RAlt:
    options: tuple
    origin: int | None = None


@dataclass(frozen=True)
class RConcat:
    first: object
    hole: str
    second: object
    origin: int | None = None


@dataclass(frozen=True)
class RStar:
    body: object
    hole: str
    origin: int | None = None


@dataclass(frozen=True)
class RHole:
    label: str
    origin: int | None = None


def lower_to_rte(template: PlanTemplate):
    """Lower a template to an RTE; repetitions become (body)^hole* . base."""

    def go(c):
        if isinstance(c, LeafToken):
            return RLeaf(c.label, template.construct_id(c))
        if isinstance(c, TreeToken):
            return RNode(c.label, tuple(go(x) for x in c.children),
                         template.construct_id(c))
        if isinstance(c, TypedVariable):
            return RWild(c.vtype, template.construct_id(c))
        if isinstance(c, Alternation):
            return RAlt(tuple(go(x) for x in c.options),
                        template.construct_id(c))
        if isinstance(c, Repetition):
            star = RStar(go(c.body), c.hole, template.construct_id(c))
            return RConcat(star, c.hole, go(c.base), template.construct_id(c))
        if isinstance(c, Hole):
            return RHole(c.label, template.construct_id(c))
        raise MalformedTemplate(f"unknown construct {c!r}")

    return go(template.root)


# --- direct matching over concrete terms ------------------------------------

_WILD_SORTS = {
    TABLE_EXPR: PLAN,
    BOOL_EXPR: BEXPR,
    COLUMN_EXPR: VEXPR,
}


def wild_matches_term(vtype: str, t: Term) -> bool:
    if vtype == COLUMN_REF:
        return t.label == "ColumnRef"
    if vtype == TABLE_REF:
        return t.label == "TableRef"
    return label_sort(t.label, t.payload) == _WILD_SORTS[vtype]


def rte_matches(rte, t: Term, env=None) -> bool:
    """Does the tree match the expression?  ``env`` maps hole labels to
    (continuation RTE, its defining env), closing over concatenations."""
    if env is None:
        env = {}
    if isinstance(rte, RLeaf):
        return t.label == rte.label and not t.children
    if isinstance(rte, RHole):
        if rte.label not in env:
            raise MalformedTemplate(f"unbound hole {rte.label!r}")
        cont, cenv = env[rte.label]
        return rte_matches(cont, t, cenv)
    if isinstance(rte, RWild):
        return wild_matches_term(rte.vtype, t)
    if isinstance(rte, RNode):
        if t.label != rte.label or len(t.children) != len(rte.children):
            return False
        return all(rte_matches(r, c, env)
                   for r, c in zip(rte.children, t.children))
    if isinstance(rte, RAlt):
        return any(rte_matches(o, t, env) for o in rte.options)
    if isinstance(rte, RConcat):
        env2 = dict(env)
        env2[rte.hole] = (rte.second, env)
        return rte_matches(rte.first, t, env2)
    if isinstance(rte, RStar):
        # zero repetitions: the hole's continuation must match directly
        if rte.hole in env:
            cont, cenv = env[rte.hole]
            if rte_matches(cont, t, cenv):
                return True
        # one repetition whose hole continues the star
        env2 = dict(env)
        env2[rte.hole] = (rte, env)
        return rte_matches(rte.body, t, env2)
    raise MalformedTemplate(f"unknown RTE node {rte!r}")
