"""SGD and Adam over named parameter dictionaries.

Steps are functional: they return a fresh parameter dict and never write
into the arrays a tape may still reference. Adam keeps its moment tensors
and step counter internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gradrec.errors import ShapeError

Array = np.ndarray
Params = dict[str, Array]


def _check_aligned(kind: str, params: Params, grads: Params) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            raise ShapeError(kind, f"a gradient for parameter {name!r}", "missing")
        if g.shape != p.shape:
            raise ShapeError(kind, f"{name!r} gradient of shape {p.shape}", str(g.shape))


@dataclass
class Sgd:
    lr: float
    kind: str = field(default="sgd", init=False)

    def step(self, params: Params, grads: Params) -> Params:
        _check_aligned("sgd_step", params, grads)
        return {name: p - self.lr * grads[name] for name, p in params.items()}


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    kind: str = field(default="adam", init=False)
    t: int = field(default=0, init=False)
    m: Params = field(default_factory=dict, init=False)
    v: Params = field(default_factory=dict, init=False)

    def step(self, params: Params, grads: Params) -> Params:
        _check_aligned("adam_step", params, grads)
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        out: Params = {}
        for name, p in params.items():
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m = self.beta1 * m + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            self.m[name] = m
            self.v[name] = v
            out[name] = p - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
        return out


def make_optimizer(kind: str, lr: float) -> Sgd | Adam:
    if kind == "sgd":
        return Sgd(lr=lr)
    if kind == "adam":
        return Adam(lr=lr)
    raise ValueError(f"unknown optimizer kind: {kind!r}")
