"""Tiny reverse-mode autodiff over numpy vectors.

The cost model's computation graph changes shape per sample (repetition
counts vary), so gradients are taped per evaluation rather than hand-coded
per layer.  Float64 throughout; the finite-difference tests depend on it.
"""

from __future__ import annotations

import numpy as np


class Var:
    __slots__ = ("value", "grad", "parents", "backward")

    def __init__(self, value, parents=(), backward=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward = backward

    def _ensure(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)


def constant(x) -> Var:
    return Var(np.asarray(x, dtype=np.float64))


def add(a: Var, b: Var) -> Var:
    out = Var(a.value + b.value, (a, b))

    def back(g):
        a._ensure(); a.grad += g
        b._ensure(); b.grad += g
    out.backward = back
    return out


def matvec(w: Var, x: Var) -> Var:
    out = Var(w.value @ x.value, (w, x))

    def back(g):
        w._ensure(); w.grad += np.outer(g, x.value)
        x._ensure(); x.grad += w.value.T @ g
    out.backward = back
    return out


def leaky_relu(x: Var, alpha: float = 0.01) -> Var:
    mask = np.where(x.value > 0, 1.0, alpha)
    out = Var(x.value * mask, (x,))

    def back(g):
        x._ensure(); x.grad += g * mask
    out.backward = back
    return out


def concat(parts: list[Var]) -> Var:
    out = Var(np.concatenate([p.value for p in parts]), tuple(parts))
    sizes = [len(p.value) for p in parts]

    def back(g):
        off = 0
        for p, n in zip(parts, sizes):
            p._ensure(); p.grad += g[off:off + n]
            off += n
    out.backward = back
    return out


def _order_free_sum(parts: list[Var]) -> np.ndarray:
    # summing per-coordinate in sorted order makes pooling exactly
    # permutation-invariant despite float non-associativity
    stacked = np.sort(np.stack([p.value for p in parts]), axis=0)
    return stacked.sum(axis=0)


def mean_stack(parts: list[Var], width: int) -> Var:
    """Average pooling; an empty child list pools to the zero vector."""
    if not parts:
        return constant(np.zeros(width))
    out = Var(_order_free_sum(parts) / len(parts), tuple(parts))

    def back(g):
        share = g / len(parts)
        for p in parts:
            p._ensure(); p.grad += share
    out.backward = back
    return out


def sum_stack(parts: list[Var], width: int) -> Var:
    if not parts:
        return constant(np.zeros(width))
    out = Var(_order_free_sum(parts), tuple(parts))

    def back(g):
        for p in parts:
            p._ensure(); p.grad += g
    out.backward = back
    return out


def backprop(root: Var, seed_grad=None):
    """Reverse topological sweep accumulating gradients into leaves."""
    order = []
    seen = set()

    def topo(v: Var):
        if id(v) in seen:
            return
        seen.add(id(v))
        for p in v.parents:
            topo(p)
        order.append(v)

    topo(root)
    root._ensure()
    root.grad = np.ones_like(root.value) if seed_grad is None \
        else np.asarray(seed_grad, dtype=np.float64)
    for v in reversed(order):
        if v.backward is not None:
            v.backward(v.grad if v.grad is not None
                       else np.zeros_like(v.value))
