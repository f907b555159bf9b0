"""Compile regular tree expressions into nondeterministic finite tree
automata.

Construction is by structural induction; alternation, concatenation, and
star boundaries introduce epsilon edges that are eliminated at the end by
duplicating transitions along epsilon closures.  Each transition carries
origin tags (which variable/alternation-option/repetition-body it realizes)
so matches can later be resolved back into template bindings.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..egraph.terms import Term
from ..errors import MalformedTemplate
from .constructs import PlanTemplate
from .rte import (RAlt, RConcat, RHole, RLeaf, RNode, RStar, RWild,
                  lower_to_rte, wild_matches_term)

SYM = "sym"
WILD = "wild"


@dataclass(frozen=True)
class Transition:
    child_states: tuple[int, ...]
    terminal: tuple[str, str]      # (SYM, label) or (WILD, vtype)
    out: int
    origins: frozenset = frozenset()


@dataclass
class Nfta:
    n_states: int
    transitions: list[Transition]
    finals: frozenset[int]
    construct_states: dict[int, frozenset]   # construct id -> associated states
    template: PlanTemplate | None = None

    def by_out(self) -> dict[int, list[Transition]]:
        idx: dict[int, list[Transition]] = {}
        for t in self.transitions:
            idx.setdefault(t.out, []).append(t)
        for lst in idx.values():
            lst.sort(key=lambda t: (t.terminal, t.child_states,
                                    sorted(map(str, t.origins))))
        return idx


class _Builder:
    def __init__(self):
        self.n = 0
        self.base: list[Transition] = []
        self.eps: list[tuple[int, int, frozenset]] = []
        self.construct_states: dict[int, set] = {}

    def state(self) -> int:
        self.n += 1
        return self.n - 1

    def note(self, origin, state):
        if origin is not None:
            self.construct_states.setdefault(origin, set()).add(state)

    def compile(self, rte):
        """Returns (out_state, pending holes as [(label, state, tags)])."""
        if isinstance(rte, RLeaf):
            q = self.state()
            self.base.append(Transition((), (SYM, rte.label), q))
            self.note(rte.origin, q)
            return q, []
        if isinstance(rte, RWild):
            q = self.state()
            tags = frozenset() if rte.origin is None \
                else frozenset({("var", rte.origin)})
            self.base.append(Transition((), (WILD, rte.vtype), q, tags))
            self.note(rte.origin, q)
            return q, []
        if isinstance(rte, RHole):
            q = self.state()
            self.note(rte.origin, q)
            return q, [(rte.label, q, frozenset())]
        if isinstance(rte, RNode):
            kids, pending = [], []
            for c in rte.children:
                qc, p = self.compile(c)
                kids.append(qc)
                pending.extend(p)
            q = self.state()
            self.base.append(Transition(tuple(kids), (SYM, rte.label), q))
            self.note(rte.origin, q)
            return q, pending
        if isinstance(rte, RAlt):
            q = self.state()
            pending = []
            for i, opt in enumerate(rte.options):
                qo, p = self.compile(opt)
                tag = frozenset() if rte.origin is None \
                    else frozenset({("alt", rte.origin, i)})
                self.eps.append((qo, q, tag))
                pending.extend(p)
            self.note(rte.origin, q)
            return q, pending
        if isinstance(rte, RConcat):
            q1, pend1 = self.compile(rte.first)
            q2, pend2 = self.compile(rte.second)
            rest = []
            filled = 0
            for label, qh, tags in pend1:
                if label == rte.hole:
                    self.eps.append((q2, qh, tags))
                    filled += 1
                else:
                    rest.append((label, qh, tags))
            if filled == 0:
                raise MalformedTemplate(
                    f"concatenation hole {rte.hole!r} not present")
            return q1, rest + pend2
        if isinstance(rte, RStar):
            qb, pend = self.compile(rte.body)
            q = self.state()
            rep_tag = frozenset() if rte.origin is None \
                else frozenset({("rep_body", rte.origin)})
            # a completed body is the whole star (outermost repetition) ...
            self.eps.append((qb, q, rep_tag))
            out_pending = []
            hole_states = [(lbl, qh, tags) for lbl, qh, tags in pend
                           if lbl == rte.hole]
            if not hole_states:
                raise MalformedTemplate(f"star hole {rte.hole!r} missing")
            for lbl, qh, tags in pend:
                if lbl == rte.hole:
                    # ... and also fills the hole of an enclosing body
                    self.eps.append((qb, qh, rep_tag | tags))
                    # whatever fills the star from outside reaches both the
                    # innermost hole and (zero repetitions) the star itself
                    out_pending.append((lbl, qh, tags))
                else:
                    out_pending.append((lbl, qh, tags))
            out_pending.append((rte.hole, q, frozenset()))
            self.note(rte.origin, q)
            return q, out_pending
        raise MalformedTemplate(f"cannot compile {rte!r}")

    def eliminate(self, root: int) -> Nfta:
        # closure over epsilon edges, accumulating tags per path
        succ: dict[int, list[tuple[int, frozenset]]] = {}
        for s, d, tags in self.eps:
            succ.setdefault(s, []).append((d, tags))

        def closure(q: int) -> set[tuple[int, frozenset]]:
            out: set[tuple[int, frozenset]] = set()
            stack = [(q, frozenset())]
            seen = set()
            while stack:
                cur, tags = stack.pop()
                for d, etags in succ.get(cur, ()):
                    item = (d, tags | etags)
                    if item not in seen:
                        seen.add(item)
                        out.add(item)
                        stack.append(item)
            return out

        transitions = list(self.base)
        for t in self.base:
            for dst, tags in closure(t.out):
                transitions.append(Transition(t.child_states, t.terminal, dst,
                                              t.origins | tags))
        # dedupe
        transitions = sorted(set(transitions),
                             key=lambda t: (t.out, t.terminal, t.child_states,
                                            sorted(map(str, t.origins))))
        cmap = {cid: frozenset(states)
                for cid, states in self.construct_states.items()}
        return Nfta(self.n, transitions, frozenset({root}), cmap)


def compile_rte(rte) -> Nfta:
    b = _Builder()
    root, pending = b.compile(rte)
    if pending:
        raise MalformedTemplate(
            f"unfilled holes at top level: {[p[0] for p in pending]}")
    return b.eliminate(root)


def compile_template(template: PlanTemplate) -> Nfta:
    nfta = compile_rte(lower_to_rte(template))
    nfta.template = template
    return nfta


def accepts_tree(nfta: Nfta, t: Term) -> bool:
    """Exact bottom-up run over a concrete tree."""
    finals = nfta.finals

    def states(node: Term) -> frozenset[int]:
        kid_states = [states(c) for c in node.children]
        out = set()
        for tr in nfta.transitions:
            kind, value = tr.terminal
            if kind == WILD:
                if not tr.child_states and wild_matches_term(value, node):
                    out.add(tr.out)
                continue
            if value != node.label or len(tr.child_states) != len(node.children):
                continue
            if all(l in ks for l, ks in zip(tr.child_states, kid_states)):
                out.add(tr.out)
        return frozenset(out)

    return bool(states(t) & finals)
