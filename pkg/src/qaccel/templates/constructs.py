"""Accelerator pattern templates.

A template describes the family of plan fragments an accelerator can
compute: a tree of tokens with three parameterized construct kinds (typed
variables, alternations, repetitions).  Templates lower to regular tree
expressions and compile to tree automata; a validator predicate refines
structural matches with semantic checks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from ..errors import MalformedTemplate, QaccelError
from ..plan import (LogicalPlan, ScalarExpr, expr_from_json, expr_to_json,
                    plan_from_json, plan_to_json)

# variable types
TABLE_REF = "table_ref"
TABLE_EXPR = "table_expr"
COLUMN_REF = "column_ref"
COLUMN_EXPR = "column_expr"
BOOL_EXPR = "bool_expr"
VAR_TYPES = (TABLE_REF, TABLE_EXPR, COLUMN_REF, COLUMN_EXPR, BOOL_EXPR)

INSTANTIATION_TIME = "instantiation"
RUN_TIME = "runtime"


@dataclass(frozen=True)
class LeafToken:
    label: str


@dataclass(frozen=True)
class TreeToken:
    label: str
    children: tuple


@dataclass(frozen=True)
class TypedVariable:
    name: str
    vtype: str
    resolution: str = INSTANTIATION_TIME

    def __post_init__(self):
        if self.vtype not in VAR_TYPES:
            raise MalformedTemplate(f"unknown variable type {self.vtype!r}")
        if self.resolution not in (INSTANTIATION_TIME, RUN_TIME):
            raise MalformedTemplate(f"unknown resolution {self.resolution!r}")


@dataclass(frozen=True)
class Alternation:
    name: str
    options: tuple


@dataclass(frozen=True)
class Repetition:
    """Zero or more occurrences of ``body`` chained at ``hole``, ending in
    one occurrence of ``base``."""
    name: str
    body: object        # contains exactly one Hole(hole)
    base: object
    hole: str


@dataclass(frozen=True)
class Hole:
    label: str


CONSTRUCTS = (LeafToken, TreeToken, TypedVariable, Alternation, Repetition, Hole)


def children_of(c):
    if isinstance(c, TreeToken):
        return c.children
    if isinstance(c, Alternation):
        return c.options
    if isinstance(c, Repetition):
        return (c.body, c.base)
    return ()


def walk(c):
    yield c
    for ch in children_of(c):
        yield from walk(ch)


class PlanTemplate:
    """A named template plus its validator.

    The validator is a pure predicate ``fn(instantiation, catalog) -> bool``
    refining structural matches (e.g. key constraints, supported types).
    """

    def __init__(self, name: str, root, validator=None):
        self.name = name
        self.root = root
        self.validator = validator
        self._validate()
        # stable construct ids by preorder position
        self.ids: dict[int, object] = {}
        self._id_of: dict[int, int] = {}
        for i, c in enumerate(walk(root)):
            self.ids[i] = c
            self._id_of[id(c)] = i

    def construct_id(self, c) -> int:
        return self._id_of[id(c)]

    def variables(self) -> list[TypedVariable]:
        return [c for c in walk(self.root) if isinstance(c, TypedVariable)]

    def alternations(self) -> list[Alternation]:
        return [c for c in walk(self.root) if isinstance(c, Alternation)]

    def repetitions(self) -> list[Repetition]:
        return [c for c in walk(self.root) if isinstance(c, Repetition)]

    def enclosing_repetition(self, c) -> Repetition | None:
        target = id(c)
        for rep in self.repetitions():
            if any(id(x) == target for x in walk(rep.body)) \
                    or any(id(x) == target for x in walk(rep.base)):
                return rep
        return None

    def _validate(self):
        names = set()
        for c in walk(self.root):
            if isinstance(c, (TypedVariable, Alternation, Repetition)):
                if c.name in names:
                    raise MalformedTemplate(f"duplicate construct name {c.name!r}")
                names.add(c.name)
        for rep in (c for c in walk(self.root) if isinstance(c, Repetition)):
            inner = [x for x in walk(rep.body) if isinstance(x, Repetition)]
            inner += [x for x in walk(rep.base) if isinstance(x, Repetition)]
            if inner:
                raise MalformedTemplate(
                    f"repetition {rep.name!r} contains a nested repetition")
            holes = [x for x in walk(rep.body)
                     if isinstance(x, Hole) and x.label == rep.hole]
            if len(holes) != 1:
                raise MalformedTemplate(
                    f"hole {rep.hole!r} must occur exactly once in the body "
                    f"of {rep.name!r} (found {len(holes)})")
            if isinstance(rep.body, Hole):
                raise MalformedTemplate(
                    f"repetition {rep.name!r} body is just its hole")
            base_holes = [x for x in walk(rep.base) if isinstance(x, Hole)]
            if base_holes:
                raise MalformedTemplate(
                    f"repetition {rep.name!r} base must not contain holes")
        # holes may only appear under a repetition with a matching label
        for c in walk(self.root):
            if isinstance(c, Hole):
                owners = [r for r in walk(self.root) if isinstance(r, Repetition)
                          and r.hole == c.label
                          and any(x is c for x in walk(r.body))]
                if not owners:
                    raise MalformedTemplate(f"dangling hole {c.label!r}")


# --- instantiations --------------------------------------------------------


@dataclass
class RepInstanceBinding:
    """Values for the constructs inside one repetition instance."""
    variables: dict = field(default_factory=dict)
    alternations: dict = field(default_factory=dict)


@dataclass
class Instantiation:
    """Resolved values for every construct of one template match."""
    template: str
    variables: dict = field(default_factory=dict)      # name -> value
    alternations: dict = field(default_factory=dict)   # name -> option index
    repetitions: dict = field(default_factory=dict)    # name -> [RepInstanceBinding]

    def rep_count(self, name: str) -> int:
        return len(self.repetitions.get(name, []))

    def merged(self, other: "Instantiation") -> "Instantiation":
        out = Instantiation(self.template,
                            dict(self.variables), dict(self.alternations),
                            {k: list(v) for k, v in self.repetitions.items()})
        out.variables.update(other.variables)
        out.alternations.update(other.alternations)
        for k, v in other.repetitions.items():
            out.repetitions[k] = list(v)
        return out


def _value_to_json(v):
    if isinstance(v, LogicalPlan):
        return {"kind": "plan", "v": plan_to_json(v)}
    if isinstance(v, ScalarExpr):
        return {"kind": "expr", "v": expr_to_json(v)}
    if isinstance(v, str):
        return {"kind": "name", "v": v}
    raise QaccelError(f"cannot serialize binding {v!r}")


def _value_from_json(d):
    if d["kind"] == "plan":
        return plan_from_json(d["v"])
    if d["kind"] == "expr":
        return expr_from_json(d["v"])
    return d["v"]


def instantiation_to_json(inst: Instantiation) -> dict:
    return {
        "template": inst.template,
        "variables": {k: _value_to_json(v) for k, v in inst.variables.items()},
        "alternations": dict(inst.alternations),
        "repetitions": {
            name: [{"variables": {k: _value_to_json(v)
                                  for k, v in b.variables.items()},
                    "alternations": dict(b.alternations)}
                   for b in insts]
            for name, insts in inst.repetitions.items()},
    }


def instantiation_from_json(doc: dict) -> Instantiation:
    return Instantiation(
        template=doc["template"],
        variables={k: _value_from_json(v)
                   for k, v in doc["variables"].items()},
        alternations={k: int(v) for k, v in doc["alternations"].items()},
        repetitions={
            name: [RepInstanceBinding(
                        variables={k: _value_from_json(v)
                                   for k, v in b["variables"].items()},
                        alternations={k: int(v)
                                      for k, v in b["alternations"].items()})
                   for b in insts]
            for name, insts in doc["repetitions"].items()},
    )


def instantiation_digest(inst: Instantiation) -> str:
    import hashlib
    blob = json.dumps(instantiation_to_json(inst), sort_keys=True,
                      separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- template JSON (fixture format for the author guide) -------------------


def template_to_json(c) -> dict:
    if isinstance(c, LeafToken):
        return {"k": "leaf", "label": c.label}
    if isinstance(c, TreeToken):
        return {"k": "token", "label": c.label,
                "children": [template_to_json(x) for x in c.children]}
    if isinstance(c, TypedVariable):
        return {"k": "var", "name": c.name, "type": c.vtype,
                "resolution": c.resolution}
    if isinstance(c, Alternation):
        return {"k": "alt", "name": c.name,
                "options": [template_to_json(x) for x in c.options]}
    if isinstance(c, Repetition):
        return {"k": "rep", "name": c.name, "hole": c.hole,
                "body": template_to_json(c.body),
                "base": template_to_json(c.base)}
    if isinstance(c, Hole):
        return {"k": "hole", "label": c.label}
    raise QaccelError(f"cannot serialize construct {c!r}")


def template_from_json(d):
    k = d["k"]
    if k == "leaf":
        return LeafToken(d["label"])
    if k == "token":
        return TreeToken(d["label"],
                         tuple(template_from_json(x) for x in d["children"]))
    if k == "var":
        return TypedVariable(d["name"], d["type"], d["resolution"])
    if k == "alt":
        return Alternation(d["name"],
                           tuple(template_from_json(x) for x in d["options"]))
    if k == "rep":
        return Repetition(d["name"], template_from_json(d["body"]),
                          template_from_json(d["base"]), d["hole"])
    if k == "hole":
        return Hole(d["label"])
    raise QaccelError(f"cannot deserialize construct kind {k!r}")
