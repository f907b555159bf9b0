"""Top-down tree-automaton matching over e-graphs, construct resolution,
and accelerator plan-option enumeration.

The matcher walks transitions from the accepting states downward.  Because
e-graphs may contain cycles and automata contain state cycles (repetitions),
a derivation branch is abandoned only when it would revisit the *same*
(state, e-class) pair: rejecting on state alone breaks repetition chains and
rejecting on class alone breaks finite recursive derivations, so both must
repeat together before pruning.  Results computed without hitting a pruned
branch are memoized; a success is always safe to reuse.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .egraph.core import EGraph, ENode, INF
from .egraph.terms import PLAN, Term, label_sort
from .errors import AmbiguousAssignment, OptionExplosion, QaccelError
from .templates.constructs import (Instantiation, PlanTemplate,
                                   RepInstanceBinding, TypedVariable,
                                   COLUMN_REF, TABLE_REF)
from .templates.nfta import WILD, Nfta, Transition

REJECT_BOTH = "both"          # prune only simultaneous state+class cycles
REJECT_STATE_ONLY = "state"   # (incorrect; kept for the regression fixtures)
REJECT_CLASS_ONLY = "class"   # (incorrect; kept for the regression fixtures)


def class_matches_wild(g: EGraph, cid: int, vtype: str, sizes) -> bool:
    if sizes.get(g.find(cid), INF) == INF:
        return False  # a binding must have a finite representative
    if vtype == COLUMN_REF:
        return g.has_node_label(cid, "ColumnRef")
    if vtype == TABLE_REF:
        return g.has_node_label(cid, "TableRef")
    from .templates.rte import _WILD_SORTS
    return g.sort_of(cid) == _WILD_SORTS[vtype]


@dataclass
class DerivNode:
    """One step of a successful derivation."""
    state: int
    eclass: int
    transition: Transition
    enode: ENode | None                  # None for wildcard leaves
    children: tuple["DerivNode", ...] = ()


@dataclass
class ConstructEvent:
    construct: int                       # template construct id
    detail: object                       # option index for alternations
    eclass: int
    discovery: int
    finish: int


@dataclass
class MatchResult:
    root: int
    final_state: int
    derivation: DerivNode
    events: list[ConstructEvent] = field(default_factory=list)
    instance_id: str | None = None       # attached by the planner


class _Matcher:
    def __init__(self, nfta: Nfta, g: EGraph, policy: str = REJECT_BOTH):
        self.nfta = nfta
        self.g = g
        self.policy = policy
        self.by_out = nfta.by_out()
        self.sizes = g.tree_sizes()
        self.memo: dict[tuple[int, int], object] = {}
        self.FAIL = object()

    def _creates_cycle(self, state: int, cid: int, path) -> bool:
        if self.policy == REJECT_BOTH:
            return (state, cid) in path
        if self.policy == REJECT_STATE_ONLY:
            return any(s == state for s, _ in path)
        return any(c == cid for _, c in path)

    def match(self, state: int, cid: int, path: frozenset):
        """Returns (DerivNode | None, clean) where clean means the outcome
        did not depend on cycle pruning and may be memoized."""
        cid = self.g.find(cid)
        key = (state, cid)
        hit = self.memo.get(key)
        if hit is not None:
            return (None, True) if hit is self.FAIL else (hit, True)
        if self._creates_cycle(state, cid, path):
            return None, False
        path2 = path | {(state, cid)}
        clean = True
        for tr in self.by_out.get(state, ()):
            kind, value = tr.terminal
            if kind == WILD:
                if class_matches_wild(self.g, cid, value, self.sizes):
                    node = DerivNode(state, cid, tr, None)
                    self.memo[key] = node
                    return node, True
                continue
            arity = len(tr.child_states)
            for enode in self.g.nodes_of(cid):
                if enode.label != value or len(enode.children) != arity:
                    continue
                kids = []
                ok = True
                for cstate, ccid in zip(tr.child_states, enode.children):
                    sub, sub_clean = self.match(cstate, ccid, path2)
                    clean = clean and sub_clean
                    if sub is None:
                        ok = False
                        break
                    kids.append(sub)
                if ok:
                    node = DerivNode(state, cid, tr, enode, tuple(kids))
                    self.memo[key] = node
                    return node, True
        if clean:
            self.memo[key] = self.FAIL
        return None, clean


def match_nfta(nfta: Nfta, g: EGraph, root: int,
               policy: str = REJECT_BOTH) -> tuple[bool, list[MatchResult]]:
    """True iff some finite tree represented at ``root`` is accepted."""
    m = _Matcher(nfta, g, policy)
    results = []
    for final in sorted(nfta.finals):
        deriv, _ = m.match(final, g.find(root), frozenset())
        if deriv is not None:
            mr = MatchResult(g.find(root), final, deriv)
            mr.events = _collect_events(deriv)
            results.append(mr)
    return bool(results), results


def match_all_classes(nfta: Nfta, g: EGraph,
                      policy: str = REJECT_BOTH) -> list[MatchResult]:
    """Run the matcher at every e-class (accelerators can sit mid-plan)."""
    out = []
    for cid in g.classes():
        if g.sort_of(cid) != PLAN:
            continue
        ok, results = match_nfta(nfta, g, cid, policy)
        out.extend(results)
    return out


# --- resolution -------------------------------------------------------------


def _collect_events(deriv: DerivNode) -> list[ConstructEvent]:
    events: list[ConstructEvent] = []
    clock = [0]

    def walk(node: DerivNode):
        clock[0] += 1
        d = clock[0]
        for child in node.children:
            walk(child)
        clock[0] += 1
        f = clock[0]
        for tag in node.transition.origins:
            if tag[0] == "var":
                events.append(ConstructEvent(tag[1], None, node.eclass, d, f))
            elif tag[0] == "alt":
                events.append(ConstructEvent(tag[1], tag[2], node.eclass, d, f))
            elif tag[0] == "rep_body":
                events.append(ConstructEvent(tag[1], "body", node.eclass, d, f))

    walk(deriv)
    return events


def _decode_binding(g: EGraph, cid: int, var: TypedVariable, sizes):
    value = g.extract_smallest(cid, sizes, frozenset({"Accel"}))
    if var.vtype in (COLUMN_REF, TABLE_REF):
        if isinstance(value, str):
            return value
        from .plan import ColumnRef
        if isinstance(value, ColumnRef):
            return value.name
        raise QaccelError(f"variable {var.name} resolved to {value!r}")
    return value


def resolve(mr: MatchResult, g: EGraph, template: PlanTemplate) -> Instantiation:
    """Turn a match into concrete construct bindings.

    Variables bind to the smallest tree of their matched class; alternation
    choices come from the matched option's exit transition; constructs inside
    a repetition are assigned to the repetition instance whose traversal
    interval is the smallest one enclosing theirs.
    """
    sizes = g.tree_sizes(frozenset({"Accel"}))
    inst = Instantiation(template.name)
    by_construct: dict[int, list[ConstructEvent]] = {}
    for ev in mr.events:
        by_construct.setdefault(ev.construct, []).append(ev)

    rep_intervals: dict[int, list[ConstructEvent]] = {}
    for rep in template.repetitions():
        rid = template.construct_id(rep)
        occ = sorted(by_construct.get(rid, []), key=lambda e: e.discovery)
        body_events = [e for e in occ if e.detail == "body"]
        rep_intervals[rid] = body_events
        inst.repetitions[rep.name] = [RepInstanceBinding()
                                      for _ in body_events]

    def assign(construct, value_setter):
        cid = template.construct_id(construct)
        occurrences = by_construct.get(cid, [])
        rep = template.enclosing_repetition(construct)
        if rep is None:
            if not occurrences:
                return
            if len(occurrences) > 1:
                raise AmbiguousAssignment(
                    f"{len(occurrences)} matches for construct outside "
                    f"repetitions: {construct!r}")
            value_setter(None, occurrences[0])
            return
        rid = template.construct_id(rep)
        instances = rep_intervals[rid]
        for ev in occurrences:
            enclosing = [i for i, b in enumerate(instances)
                         if b.discovery <= ev.discovery and ev.finish <= b.finish]
            if not enclosing:
                raise AmbiguousAssignment(
                    f"no repetition instance encloses construct {construct!r}")
            # smallest enclosing interval
            best = min(enclosing,
                       key=lambda i: instances[i].finish - instances[i].discovery)
            value_setter((rep.name, best), ev)

    for var in template.variables():
        def set_var(slot, ev, var=var):
            value = _decode_binding(g, ev.eclass, var, sizes)
            if slot is None:
                inst.variables[var.name] = value
            else:
                rep_name, idx = slot
                inst.repetitions[rep_name][idx].variables[var.name] = value
        assign(var, set_var)

    for alt in template.alternations():
        def set_alt(slot, ev, alt=alt):
            if slot is None:
                inst.alternations[alt.name] = ev.detail
            else:
                rep_name, idx = slot
                inst.repetitions[rep_name][idx].alternations[alt.name] = ev.detail
        assign(alt, set_alt)

    # instance order: intervals of a chain are nested with the outermost
    # (leftmost in source order) discovered first, which the sort preserved
    return inst


# --- option enumeration ------------------------------------------------------


@dataclass
class AccelNodeInfo:
    """One accelerator e-node inserted into a matched class."""
    instance_id: str
    call_id: str
    match: MatchResult
    child_classes: tuple[int, ...] = ()


def insert_accel_nodes(g: EGraph, infos: list[AccelNodeInfo]):
    for info in infos:
        g.insert_enode_into(info.match.root, "Accel",
                            (info.instance_id, info.call_id),
                            tuple(g.find(c) for c in info.child_classes))


def enumerate_options(g: EGraph, root: int, option_cap: int = 64):
    """All plans for the root class, varying only accelerator placement.

    Per class: the smallest bare tree expanded over its children, plus each
    accelerator node with its children expanded; classes with no accelerator
    below contribute exactly their smallest tree.  The bare plan is always
    among the root options.
    """
    bare_exclude = frozenset({"Accel"})
    sizes = g.tree_sizes(bare_exclude)

    has_accel: dict[int, bool] = {}

    def compute_has_accel(cid: int, stack: frozenset) -> bool:
        cid = g.find(cid)
        if cid in has_accel:
            return has_accel[cid]
        if cid in stack:
            return False
        stack2 = stack | {cid}
        found = False
        for n in g.nodes_of(cid):
            if n.label == "Accel":
                found = True
                break
            if any(compute_has_accel(c, stack2) for c in n.children):
                found = True
                break
        has_accel[cid] = found
        return found

    memo: dict[int, list[Term]] = {}
    in_progress: set[int] = set()

    def options(cid: int) -> list[Term]:
        cid = g.find(cid)
        if cid in memo:
            return memo[cid]
        if cid in in_progress:  # cyclic derivation: fall back to the bare tree
            return [g.extract_smallest_term(cid, sizes, bare_exclude)]
        in_progress.add(cid)
        try:
            return _options_inner(cid)
        finally:
            in_progress.discard(cid)

    def _options_inner(cid: int) -> list[Term]:
        if not compute_has_accel(cid, frozenset()):
            out = [g.extract_smallest_term(cid, sizes, bare_exclude)]
            memo[cid] = out
            return out
        out = []
        seen = set()
        bare = _bare_node(g, cid, sizes)
        accel_nodes = [n for n in g.nodes_of(cid) if n.label == "Accel"]
        for n in ([bare] if bare is not None else []) + accel_nodes:
            child_opts = [options(c) for c in n.children]
            for combo in _product(child_opts):
                t = Term(n.label, n.payload, combo)
                if t not in seen:
                    seen.add(t)
                    out.append(t)
                if len(out) > option_cap:
                    raise OptionExplosion(
                        f"more than {option_cap} plan options at class {cid}")
        memo[cid] = out
        return out

    terms = options(g.find(root))
    from .egraph.terms import decode_plan
    plans = [decode_plan(t) for t in terms]
    # the accelerator-free plan is always a contender and listed first
    bare_plan = g.extract_smallest(root, sizes, bare_exclude)
    ordered = [bare_plan] + [p for p in plans if p != bare_plan]
    return ordered


def _bare_node(g: EGraph, cid: int, sizes):
    best, best_key = None, None
    for n in g.nodes_of(cid):
        if n.label == "Accel":
            continue
        if any(sizes.get(g.find(c), INF) == INF for c in n.children):
            continue
        own = 2 if label_sort(n.label, n.payload) == PLAN else 1
        key = (own + sum(sizes[g.find(c)] for c in n.children), n.label,
               repr(n.payload), tuple(g.find(c) for c in n.children))
        if best_key is None or key < best_key:
            best, best_key = n, key
    return best


def _product(lists):
    if not lists:
        yield ()
        return
    head, *tail = lists
    for h in head:
        for rest in _product(tail):
            yield (h,) + rest
