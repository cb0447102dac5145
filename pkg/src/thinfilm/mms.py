"""Manufactured solutions: exact jets of symbolic fields on collar grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import sympy as sp

from .grid import CollarGrid, multi_indices
from .jets import Jet, algebra
from .nodal import BOTTOM_KINDS, TOP_KINDS, functional_values, geometry_jets


@dataclass
class ExactField:
    """A field given by a sympy expression in collar coordinates and time."""

    expr: sp.Expr
    space: tuple
    t: sp.Symbol

    def _fn(self, e):
        return sp.lambdify(self.space + (self.t,), e, "numpy")

    def values(self, grid: CollarGrid, t: float, expr=None) -> np.ndarray:
        c = grid.full_coords()
        v = self._fn(self.expr if expr is None else expr)(*c, t)
        return np.array(np.broadcast_to(v, grid.shape), dtype=float)

    def time_derivative(self, grid: CollarGrid, t: float) -> np.ndarray:
        return self.values(grid, t, sp.diff(self.expr, self.t))

    def jet(self, grid: CollarGrid, t: float, K: int = 4) -> Jet:
        alg = algebra(grid.ndim)
        derivs = {}
        for a in multi_indices(grid.ndim, K):
            e = self.expr
            for s, k in zip(self.space, a):
                if k:
                    e = sp.diff(e, s, k)
            derivs[a] = self.values(grid, t, e)
        return Jet.from_derivatives(alg, K, derivs, grid.shape, float)


def linear_data(grid: CollarGrid, times, u: ExactField, w: ExactField, sigma: ExactField | None,
                gamma0: float, bottom: str = "neumann", top: str = "noflux"):
    """Forcing, wall data and top data that make ``u`` solve
    u_t + div(w^2 grad lap u) = f in the metric of ``sigma``.

    Returns f (levels, *shape), wall (levels, *tshape) and
    top (levels, *tshape, 2) ordered (first, second) top functional.
    """
    M = grid.normal.size - 1
    first, second = TOP_KINDS[top]
    f, wall, topd = [], [], []
    for t in times:
        rho = np.zeros(grid.tshape) if sigma is None else sigma.values(grid, t)[..., 0]
        E = geometry_jets(grid, rho, gamma0).E
        wj = w.jet(grid, t, 1)
        vals = functional_values(u.jet(grid, t, 4), wj * wj, E)
        f.append(u.time_derivative(grid, t) + vals["interior"])
        wall.append(np.broadcast_to(vals[BOTTOM_KINDS[bottom]], grid.shape)[..., 0])
        topd.append(np.stack([np.broadcast_to(vals[first], grid.shape)[..., M],
                              np.broadcast_to(vals[second], grid.shape)[..., M]], axis=-1))
    return np.array(f), np.array(wall), np.array(topd)
