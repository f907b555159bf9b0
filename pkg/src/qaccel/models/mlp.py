"""Two-layer perceptrons with named parameters, built on the tape."""

from __future__ import annotations

import numpy as np

from .autograd import Var, add, leaky_relu, matvec


class Mlp:
    """Linear -> leaky ReLU -> Linear, float64, He-style init."""

    def __init__(self, name: str, in_dim: int, out_dim: int, hidden: int,
                 rng: np.random.Generator):
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.hidden = hidden
        self.params: dict[str, Var] = {}
        self._init(rng)

    def _init(self, rng):
        def mk(label, shape, scale):
            self.params[f"{self.name}/{label}"] = Var(
                rng.normal(0.0, scale, size=shape))
        mk("w1", (self.hidden, self.in_dim), np.sqrt(2.0 / max(self.in_dim, 1)))
        mk("b1", (self.hidden,), 0.0)
        mk("w2", (self.out_dim, self.hidden), np.sqrt(2.0 / self.hidden))
        mk("b2", (self.out_dim,), 0.0)

    def __call__(self, x: Var) -> Var:
        p = self.params
        h = leaky_relu(add(matvec(p[f"{self.name}/w1"], x),
                           p[f"{self.name}/b1"]))
        return add(matvec(p[f"{self.name}/w2"], h), p[f"{self.name}/b2"])


class Momentum:
    """Plain gradient descent with momentum over named parameters."""

    def __init__(self, params: dict[str, Var], lr: float = 1e-2,
                 beta: float = 0.9):
        self.params = params
        self.lr = lr
        self.beta = beta
        self.velocity = {k: np.zeros_like(v.value) for k, v in params.items()}

    def zero_grad(self):
        for v in self.params.values():
            v.grad = None

    def step(self):
        for k, v in self.params.items():
            if v.grad is None:
                continue
            self.velocity[k] = self.beta * self.velocity[k] - self.lr * v.grad
            v.value = v.value + self.velocity[k]
