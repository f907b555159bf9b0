"""Congruence-closed e-graph with hash-consing and smallest-tree extraction."""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import NoFiniteTree, QaccelError
from ..plan import LogicalPlan
from .terms import Term, decode, encode_plan, label_sort

INF = float("inf")


@dataclass(frozen=True)
class ENode:
    label: str
    payload: object
    children: tuple[int, ...]


class EGraph:
    def __init__(self):
        self._parent: list[int] = []
        self._nodes: dict[int, list[ENode]] = {}
        self._sort: dict[int, str] = {}
        self._hashcons: dict[ENode, int] = {}
        self._uses: dict[int, list[tuple[ENode, int]]] = {}
        self._pending: list[int] = []
        self.version = 0  # bumped on any union; caches key off this

    # --- union-find ---

    def find(self, a: int) -> int:
        while self._parent[a] != a:
            self._parent[a] = self._parent[self._parent[a]]
            a = self._parent[a]
        return a

    def _new_class(self, sort: str) -> int:
        cid = len(self._parent)
        self._parent.append(cid)
        self._nodes[cid] = []
        self._uses[cid] = []
        self._sort[cid] = sort
        return cid

    def canonical(self, n: ENode) -> ENode:
        return ENode(n.label, n.payload, tuple(self.find(c) for c in n.children))

    # --- construction ---

    def add_enode(self, label: str, payload, children: tuple[int, ...]) -> int:
        n = self.canonical(ENode(label, payload, children))
        if n in self._hashcons:
            return self.find(self._hashcons[n])
        cid = self._new_class(label_sort(label, payload))
        self._nodes[cid].append(n)
        self._hashcons[n] = cid
        for c in set(n.children):
            self._uses[c].append((n, cid))
        return cid

    def add_term(self, t: Term) -> int:
        kids = tuple(self.add_term(c) for c in t.children)
        return self.add_enode(t.label, t.payload, kids)

    def insert_enode_into(self, cid: int, label: str, payload,
                          children: tuple[int, ...]) -> int:
        """Add a node and declare it equivalent to an existing class."""
        nid = self.add_enode(label, payload, children)
        self.union(cid, nid)
        self.rebuild()
        return self.find(cid)

    # --- merging ---

    def union(self, a: int, b: int) -> bool:
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        if self._sort[a] != self._sort[b]:
            raise QaccelError(
                f"refusing to merge classes of sorts {self._sort[a]!r} "
                f"and {self._sort[b]!r}")
        self.version += 1
        # keep the smaller id as representative for stable extraction order
        if b < a:
            a, b = b, a
        self._parent[b] = a
        self._nodes[a].extend(self._nodes.pop(b))
        self._uses[a].extend(self._uses.pop(b))
        self._sort.pop(b)
        self._pending.append(a)
        return True

    def rebuild(self):
        """Restore congruence: equal nodes with equal children share a class."""
        while self._pending:
            todo = {self.find(c) for c in self._pending}
            self._pending.clear()
            for cid in todo:
                cid = self.find(cid)
                uses = self._uses.pop(cid, [])
                self._uses[cid] = []  # key must survive unions into cid
                repaired = []
                for node, owner in uses:
                    self._hashcons.pop(node, None)
                    canon = self.canonical(node)
                    owner = self.find(owner)
                    prior = self._hashcons.get(canon)
                    if prior is not None and self.find(prior) != owner:
                        self.union(prior, owner)
                        owner = self.find(owner)
                    self._hashcons[canon] = owner
                    repaired.append((canon, owner))
                self._uses[self.find(cid)].extend(repaired)

    # --- inspection ---

    def classes(self) -> list[int]:
        return sorted({self.find(i) for i in range(len(self._parent))})

    def nodes_of(self, cid: int) -> list[ENode]:
        out, seen = [], set()
        for n in self._nodes[self.find(cid)]:
            cn = self.canonical(n)
            if cn not in seen:
                seen.add(cn)
                out.append(cn)
        return out

    def sort_of(self, cid: int) -> str:
        return self._sort[self.find(cid)]

    def node_count(self) -> int:
        return sum(len(self.nodes_of(c)) for c in self.classes())

    def class_count(self) -> int:
        return len(self.classes())

    def has_node_label(self, cid: int, label: str) -> bool:
        return any(n.label == label for n in self.nodes_of(cid))

    # --- extraction ---

    def tree_sizes(self, exclude: frozenset = frozenset()) -> dict[int, float]:
        """Minimal represented tree cost per class (inf if only cyclic).

        Plan operators cost 2 and other nodes 1, so among same-node-count
        alternatives the one with fewer operators wins (a merged filter
        beats a filter chain).  Nodes whose label is in ``exclude`` (e.g.
        inserted accelerator calls) are ignored.
        """
        sizes = {c: INF for c in self.classes()}
        changed = True
        while changed:
            changed = False
            for c in sizes:
                for n in self.nodes_of(c):
                    if n.label in exclude:
                        continue
                    s = 2 if label_sort(n.label, n.payload) == "plan" else 1
                    ok = True
                    for ch in n.children:
                        cs = sizes[self.find(ch)]
                        if cs == INF:
                            ok = False
                            break
                        s += cs
                    if ok and s < sizes[c]:
                        sizes[c] = s
                        changed = True
        return sizes

    def extract_smallest_term(self, cid: int,
                              sizes: dict[int, float] | None = None,
                              exclude: frozenset = frozenset()) -> Term:
        sizes = sizes if sizes is not None else self.tree_sizes(exclude)
        cid = self.find(cid)
        if sizes.get(cid, INF) == INF:
            raise NoFiniteTree(f"class {cid} has no finite representative")

        def node_key(n: ENode):
            own = 2 if label_sort(n.label, n.payload) == "plan" else 1
            total = own + sum(sizes[self.find(c)] for c in n.children)
            return (total, n.label, repr(n.payload),
                    tuple(self.find(c) for c in n.children))

        def go(c: int) -> Term:
            c = self.find(c)
            best = min((n for n in self.nodes_of(c)
                        if n.label not in exclude
                        and all(sizes[self.find(ch)] != INF
                                for ch in n.children)),
                       key=node_key)
            return Term(best.label, best.payload,
                        tuple(go(ch) for ch in best.children))

        return go(cid)

    def extract_smallest(self, cid: int, sizes=None,
                         exclude: frozenset = frozenset()):
        """Smallest represented tree, decoded to a plan/expression/name."""
        return decode(self.extract_smallest_term(cid, sizes, exclude))


def from_plan(plan: LogicalPlan) -> tuple[EGraph, int]:
    g = EGraph()
    root = g.add_term(encode_plan(plan))
    return g, root


def dump(g: EGraph, sizes=None) -> str:
    """Human-readable listing for the explain command."""
    lines = [f"e-graph: {g.class_count()} classes, {g.node_count()} nodes"]
    for c in g.classes():
        lines.append(f"  class {c} [{g.sort_of(c)}]")
        for n in g.nodes_of(c):
            kids = ", ".join(str(g.find(ch)) for ch in n.children)
            payload = "" if n.payload is None else f" {n.payload!r}"
            lines.append(f"    {n.label}{payload}({kids})")
    return "\n".join(lines)
