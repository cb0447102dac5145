"""Truncated multivariate Taylor jets over a grid of nodes.

A jet of order K stores, at every node, the normalized Taylor
coefficients ``D^alpha f / alpha!`` for all ``|alpha| <= K``.  Products,
reciprocals and total derivatives act on jets exactly (up to truncation),
so chained chain-rule expressions such as the pulled-back thin-film
operator can be evaluated nodewise once the jets of the unknowns are known.
Everything works with complex arrays, which is what the complex-step
linearizations rely on.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .grid import factorial, multi_indices


class JetAlgebra:
    """Index bookkeeping for jets in ``ndim`` variables up to ``max_order``."""

    def __init__(self, ndim: int, max_order: int = 5):
        self.ndim = ndim
        self.max_order = max_order
        self.alphas = multi_indices(ndim, max_order)
        self.index = {a: i for i, a in enumerate(self.alphas)}
        self.ncomp = [len(multi_indices(ndim, k)) for k in range(max_order + 1)]
        self.fact = np.array([factorial(a) for a in self.alphas])
        self._prod = {}
        self._deriv = {}

    def product_plan(self, K):
        if K not in self._prod:
            gi, ai, bi = [], [], []
            for g in self.alphas[: self.ncomp[K]]:
                for a in self.alphas[: self.ncomp[K]]:
                    b = tuple(x - y for x, y in zip(g, a))
                    if min(b) >= 0:
                        gi.append(self.index[g])
                        ai.append(self.index[a])
                        bi.append(self.index[b])
            order = np.argsort(gi, kind="stable")
            gi, ai, bi = (np.asarray(v)[order] for v in (gi, ai, bi))
            starts = np.searchsorted(gi, np.arange(self.ncomp[K]))
            self._prod[K] = (ai, bi, starts)
        return self._prod[K]

    def derivative_plan(self, K, k):
        key = (K, k)
        if key not in self._deriv:
            src, fac = [], []
            for a in self.alphas[: self.ncomp[K - 1]]:
                b = list(a)
                b[k] += 1
                src.append(self.index[tuple(b)])
                fac.append(a[k] + 1)
            self._deriv[key] = (np.asarray(src), np.asarray(fac, dtype=float))
        return self._deriv[key]


@lru_cache(maxsize=8)
def algebra(ndim: int) -> JetAlgebra:
    return JetAlgebra(ndim, 5)


class Jet:
    __slots__ = ("alg", "K", "c")

    def __init__(self, alg: JetAlgebra, K: int, c: np.ndarray):
        self.alg = alg
        self.K = K
        self.c = c

    # ---------------------------------------------------------------- build
    @classmethod
    def constant(cls, alg, K, value, shape):
        c = np.zeros((alg.ncomp[K],) + tuple(shape), dtype=np.result_type(value, float))
        c[0] = value
        return cls(alg, K, c)

    @classmethod
    def from_derivatives(cls, alg, K, derivs: dict, shape, dtype=float):
        """Jet from a mapping alpha -> D^alpha f (missing entries are zero)."""
        c = np.zeros((alg.ncomp[K],) + tuple(shape), dtype=dtype)
        for i, a in enumerate(alg.alphas[: alg.ncomp[K]]):
            if a in derivs:
                c[i] = derivs[a] / alg.fact[i]
        return cls(alg, K, c)

    def derivative_values(self) -> dict:
        return {a: self.c[i] * self.alg.fact[i] for i, a in enumerate(self.alg.alphas[: self.alg.ncomp[self.K]])}

    @property
    def value(self):
        return self.c[0]

    def truncate(self, K):
        if K >= self.K:
            return self
        return Jet(self.alg, K, self.c[: self.alg.ncomp[K]])

    # ---------------------------------------------------------------- algebra
    def _coerce(self, other):
        if isinstance(other, Jet):
            K = min(self.K, other.K)
            return self.truncate(K), other.truncate(K), K
        return None

    def __add__(self, other):
        if isinstance(other, Jet):
            a, b, K = self._coerce(other)
            return Jet(self.alg, K, a.c + b.c)
        c = self.c.copy() if np.iscomplexobj(self.c) or np.isrealobj(other) else self.c.astype(complex)
        c[0] = c[0] + other
        return Jet(self.alg, self.K, c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.alg, self.K, -self.c)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.alg, self.K, self.c * other)
        a, b, K = self._coerce(other)
        ai, bi, starts = self.alg.product_plan(K)
        prod = a.c[ai] * b.c[bi]
        return Jet(self.alg, K, np.add.reduceat(prod, starts, axis=0))

    __rmul__ = __mul__

    def reciprocal(self):
        K = self.K
        alg = self.alg
        n = alg.ncomp[K]
        g = np.zeros_like(self.c)
        g0 = 1.0 / self.c[0]
        g[0] = g0
        for gi in range(1, n):
            gam = alg.alphas[gi]
            acc = 0.0
            for bi in range(1, gi + 1):
                beta = alg.alphas[bi]
                rest = tuple(x - y for x, y in zip(gam, beta))
                if min(rest) < 0:
                    continue
                acc = acc + self.c[bi] * g[alg.index[rest]]
            g[gi] = -g0 * acc
        return Jet(alg, K, g)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return Jet(self.alg, self.K, self.c / other)

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def d(self, k: int) -> "Jet":
        """Total derivative in variable k; lowers the order by one."""
        if self.K == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        src, fac = self.alg.derivative_plan(self.K, k)
        fac = fac.reshape((-1,) + (1,) * (self.c.ndim - 1))
        return Jet(self.alg, self.K - 1, self.c[src] * fac)


def coordinate_jet(alg, K, k, values, shape):
    """Jet of the k-th coordinate function."""
    c = np.zeros((alg.ncomp[K],) + tuple(shape))
    c[0] = np.broadcast_to(values, shape)
    if K >= 1:
        e = [0] * alg.ndim
        e[k] = 1
        c[alg.index[tuple(e)]] = 1.0
    return Jet(alg, K, c)


def trig_jet(alg, K, k, theta, shape, kind="cos"):
    """Jet of cos or sin of the k-th coordinate."""
    c = np.zeros((alg.ncomp[K],) + tuple(shape))
    th = np.broadcast_to(theta, shape)
    cycle = [np.cos(th), -np.sin(th), -np.cos(th), np.sin(th)]
    shift = 0 if kind == "cos" else 3
    for m in range(K + 1):
        e = [0] * alg.ndim
        e[k] = m
        c[alg.index[tuple(e)]] = cycle[(m + shift) % 4] / factorial((m,))
    return Jet(alg, K, c)
