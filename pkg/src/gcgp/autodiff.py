"""A small reverse-mode tape over whole-matrix numpy operations.

Nodes are matrices, not scalars: the tape records a few dozen intermediates
per forward pass (products, elementwise maps, one Cholesky solve) and
replays their adjoints in reverse.  Only what the condensation objective
needs is implemented.

    tape = Tape()
    x = tape.var(np.ones((3, 2)))
    y = (x @ x.T).sum()
    tape.backward(y)
    x.grad  # d y / d x

A tape is single-use and not reentrant; build a fresh one per pass.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

from .gp import factorize


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == tuple(shape):
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


class Var:
    __slots__ = ("value", "grad", "tape", "parents", "backward_fn", "name")
    __array_priority__ = 100

    def __init__(self, value, tape: "Tape", parents=(), backward_fn: Optional[Callable] = None, name=None):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.tape = tape
        self.parents = parents
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def requires_grad(self) -> bool:
        return self.backward_fn is not None or self.name is not None

    def _accumulate(self, g):
        self.grad = g if self.grad is None else self.grad + g

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(self.tape.lift(other)))

    def __rsub__(self, other):
        return add(neg(self), other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self.tape.lift(other)
        return mul(self, power(other, -1.0))

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(self.tape.lift(other), self)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def __repr__(self):
        return f"Var(shape={self.shape}, name={self.name})"


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    def var(self, value, name="param") -> Var:
        """A leaf whose gradient is wanted."""
        v = Var(value, self, name=name)
        self.nodes.append(v)
        return v

    def const(self, value) -> Var:
        return Var(value, self)

    def lift(self, x) -> Var:
        return x if isinstance(x, Var) else self.const(x)

    def record(self, value, parents, backward_fn) -> Var:
        live = tuple(p for p in parents if p.requires_grad)
        if not live:
            return Var(value, self)
        v = Var(value, self, parents, backward_fn)
        self.nodes.append(v)
        return v

    def backward(self, out: Var, seed=None) -> None:
        for n in self.nodes:
            n.grad = None
        out.grad = np.ones_like(out.value) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(self.nodes):
            if node.backward_fn is None or node.grad is None:
                continue
            node.backward_fn(node.grad)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Var):
            return x.tape
    raise TypeError("at least one operand must be a Var")


def _pass(p: Var, g):
    if p.requires_grad:
        p._accumulate(g)


def add(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = t.lift(a), t.lift(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return t.record(a.value + b.value, (a, b), bw)


def neg(a: Var) -> Var:
    return a.tape.record(-a.value, (a,), lambda g: _pass(a, -g))


def mul(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = t.lift(a), t.lift(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return t.record(a.value * b.value, (a, b), bw)


def power(a: Var, p: float) -> Var:
    val = a.value ** p

    def bw(g):
        _pass(a, g * p * a.value ** (p - 1.0))

    return a.tape.record(val, (a,), bw)


def matmul(a, b) -> Var:
    t = _tape_of(a, b)
    a, b = t.lift(a), t.lift(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return t.record(a.value @ b.value, (a, b), bw)


def transpose(a: Var) -> Var:
    return a.tape.record(a.value.T, (a,), lambda g: _pass(a, g.T))


def sum_(a: Var, axis=None, keepdims=False) -> Var:
    val = a.value.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _pass(a, np.broadcast_to(g, a.shape).copy())

    return a.tape.record(val, (a,), bw)


def sqrt(a: Var) -> Var:
    return power(a, 0.5)


def sigmoid(a: Var) -> Var:
    s = expit(a.value)
    return a.tape.record(s, (a,), lambda g: _pass(a, g * s * (1.0 - s)))


def asin_clamped(a: Var, bound: float, counter: Optional[list] = None) -> Var:
    """``arcsin`` with inputs clipped to ``[-bound, bound]``.

    Clipped entries get a zero derivative; their count is appended to
    ``counter`` when given.
    """
    inside = np.abs(a.value) <= bound
    if counter is not None:
        counter.append(int((~inside).sum()))
    z = np.clip(a.value, -bound, bound)

    def bw(g):
        d = np.where(inside, 1.0 / np.sqrt(1.0 - z * z), 0.0)
        _pass(a, g * d)

    return a.tape.record(np.arcsin(z), (a,), bw)


def triu_mirror(a: Var) -> Var:
    """Keep the strict upper triangle and mirror it: ``U + U^T``."""
    mask = np.triu(np.ones(a.shape), 1)
    u = a.value * mask
    return a.tape.record(u + u.T, (a,), lambda g: _pass(a, (g + g.T) * mask))


def spd_solve(M, B):
    """``M^-1 B`` for symmetric positive definite ``M`` via Cholesky.

    Returns ``(X, L, jitter)``; the factor is reused in the adjoint
    ``B_bar = M^-1 X_bar`` and ``M_bar = -B_bar X^T``.
    """
    t = _tape_of(M, B)
    M, B = t.lift(M), t.lift(B)
    L, jitter = factorize(M.value, 0.0)
    X = cho_solve((L, True), B.value, check_finite=False)

    def bw(g):
        Bbar = cho_solve((L, True), g, check_finite=False)
        if B.requires_grad:
            B._accumulate(Bbar)
        if M.requires_grad:
            M._accumulate(-Bbar @ X.T)

    return t.record(X, (M, B), bw), L, jitter
