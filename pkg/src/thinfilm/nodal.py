"""Nodal slab operators for the pulled-back fourth-order problem.

One implicit slab couples every grid node.  Row layout along the
wall-normal axis (node index j = 0..M):

* j = 0        wall functional (normal derivative or value)
* j = 1..M-2   ``mass * u + div(c grad lap u)`` in the mapped metric
* j = M-1      second top functional, evaluated at node M
* j = M        first top functional, evaluated at node M

Every row is a linear combination of nodal derivatives ``D^alpha u``.  The
coefficients are read off the jet pipeline by feeding it unit jets, so the
same code that evaluates the nonlinear operator defines the linear one.
Averaging the coefficients over the tangential axes gives a per-mode
operator that is inverted exactly and used as a preconditioner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConfigError, StagnationError
from .geometry import divergence_form, extension_jet, field_jet, grad_y, map_jets
from .grid import CollarGrid
from .jets import Jet, algebra, coordinate_jet

TOP_KINDS = {
    "robin": ("value", "robin"),
    "simply_supported": ("value", "lap"),
    "noflux": ("lap", "flux"),
    "clamped": ("value", "flux"),
}
BOTTOM_KINDS = {"neumann": "neumann", "dirichlet": "value"}
ORDER = 4


def geometry_jets(grid: CollarGrid, rho_b, gamma0: float):
    """Transition-matrix jets for a deviation ``rho_b`` (None means zero)."""
    if rho_b is None:
        rho_b = np.zeros(grid.tshape)
    return map_jets(grid, extension_jet(grid, rho_b, gamma0, K=ORDER))


def _normal(E, n):
    col = [E[i][n - 1].value for i in range(n)]
    K = np.sqrt(sum(c * c for c in col))
    return [c / K for c in col], K


def functional_values(u: Jet, coef: Jet, E) -> dict:
    """All row functionals of a (possibly unit) jet ``u``."""
    n = len(E)
    parts = divergence_form(u, coef, E)
    nvec, _ = _normal(E, n)
    g1 = grad_y(u, E)
    lap = parts.lap.value
    flux = sum(nvec[i] * parts.flux_grad[i].value for i in range(n))
    return {
        "interior": parts.div.value,
        "value": u.value,
        "neumann": sum(nvec[i] * g1[i].value for i in range(n)),
        "lap": lap,
        "flux": flux,
        "robin": flux + lap,
    }


def slab_coefficients(grid: CollarGrid, coef: Jet, E) -> dict:
    """Coefficient fields ``{functional: {alpha: array}}`` with
    ``functional(u) = sum_alpha C_alpha D^alpha u``.  Zero fields dropped."""
    alg = algebra(grid.ndim)
    n = alg.ncomp[ORDER]
    out: dict = {}
    for i, a in enumerate(alg.alphas[:n]):
        c = np.zeros((n,) + grid.shape)
        c[i] = 1.0 / alg.fact[i]
        vals = functional_values(Jet(alg, ORDER, c), coef, E)
        for name, v in vals.items():
            v = np.broadcast_to(np.real(v), grid.shape)
            if np.any(v != 0):
                out.setdefault(name, {})[a] = np.array(v)
    return out


@dataclass(eq=False)
class SlabOperator:
    """Linear slab operator with its frozen per-mode preconditioner."""

    grid: CollarGrid
    coeffs: dict
    mass: float
    bottom: str = "neumann"
    top: str = "noflux"
    _pinv: np.ndarray | None = field(default=None, repr=False)
    _scale: np.ndarray | None = field(default=None, repr=False)
    _anorm: float = field(default=0.0, repr=False)

    def __post_init__(self):
        if self.bottom not in BOTTOM_KINDS:
            raise ConfigError(f"unknown wall condition {self.bottom}")
        if self.top not in TOP_KINDS:
            raise ConfigError(f"unknown top condition {self.top}")

    # ------------------------------------------------------------- action
    def _combine(self, D, name, sl=None):
        acc = 0.0
        for a, C in self.coeffs.get(name, {}).items():
            if sl is None:
                acc = acc + C * D[a]
            else:
                acc = acc + C[..., sl] * D[a][..., sl]
        return acc

    def apply(self, u: np.ndarray) -> np.ndarray:
        D = self.grid.derivatives(u, ORDER)
        out = self.mass * u + self._combine(D, "interior")
        out = np.array(np.broadcast_to(out, u.shape), dtype=np.result_type(u, float))
        M = u.shape[-1] - 1
        out[..., 0] = self._combine(D, BOTTOM_KINDS[self.bottom], 0)
        first, second = TOP_KINDS[self.top]
        out[..., M - 1] = self._combine(D, second, M)
        out[..., M] = self._combine(D, first, M)
        return out

    # ------------------------------------------------------------- preconditioner
    def _mode_matrices(self):
        g = self.grid
        M = g.normal.size - 1
        nt = len(g.tangential)
        taxes = tuple(range(nt))
        S = {m: g.normal_matrix(m).toarray() for m in range(ORDER + 1)}
        S[0] = np.eye(M + 1)
        nm = int(np.prod(g.tshape)) if nt else 1
        P = np.zeros((nm, M + 1, M + 1), dtype=complex)

        def add_rows(name, rows, at=None):
            for a, C in self.coeffs.get(name, {}).items():
                prof = C.mean(axis=taxes) if nt else C
                sym = g.tangential_symbol(a[:-1]).reshape(-1) if nt else np.ones(1)
                if at is None:
                    block = prof[rows, None] * S[a[-1]][rows]
                else:
                    block = prof[at] * S[a[-1]][at][None, :].repeat(len(rows), 0)
                P[:, rows, :] += sym[:, None, None] * block[None]

        interior = np.arange(1, M - 1)
        P[:, interior, interior] += self.mass
        add_rows("interior", interior)
        first, second = TOP_KINDS[self.top]
        add_rows(BOTTOM_KINDS[self.bottom], np.array([0]), at=0)
        add_rows(second, np.array([M - 1]), at=M)
        add_rows(first, np.array([M]), at=M)
        return P

    def _build(self):
        P = self._mode_matrices()
        scale = 1.0 / np.max(np.abs(P[0]), axis=1)
        self._scale = scale
        Ps = P * scale[None, :, None]
        self._anorm = float(np.max(np.abs(Ps).sum(axis=2)))
        self._pinv = np.linalg.inv(Ps)

    def precondition(self, r: np.ndarray) -> np.ndarray:
        """Exact inverse of the tangentially averaged operator."""
        if self._pinv is None:
            self._build()
        g = self.grid
        nt = len(g.tangential)
        rs = r * self._scale
        if nt:
            R = np.fft.fftn(rs, axes=tuple(range(nt))).reshape(-1, rs.shape[-1])
        else:
            R = rs.reshape(1, -1).astype(complex)
        X = np.einsum("kij,kj->ki", self._pinv, R)
        if nt:
            x = np.fft.ifftn(X.reshape(g.tshape + (-1,)), axes=tuple(range(nt)))
        else:
            x = X.reshape(-1)
        return x.real if np.isrealobj(r) else x

    # ------------------------------------------------------------- solve
    def row_scale(self) -> np.ndarray:
        """Per-row equilibration weights (wall-normal profile)."""
        if self._pinv is None:
            self._build()
        return self._scale

    def solve(self, rhs: np.ndarray, x0=None, tol: float = 1e-9, restart: int = 40, maxiter: int = 400,
              stall_window: int = 8) -> tuple[np.ndarray, "SolveInfo"]:
        """GMRES on the row-equilibrated system; ``tol`` bounds the relative
        equilibrated residual."""
        s = self.row_scale()
        pre = lambda r: self.precondition(r / s)
        return gmres_solve(lambda u: self.apply(u) * s, pre, rhs * s, x0, tol, restart, maxiter, stall_window,
                           anorm=self._anorm)


@dataclass
class SolveInfo:
    iterations: int
    residuals: list
    converged: bool


def gmres_solve(apply, precond, rhs, x0=None, tol=1e-9, restart=40, maxiter=400, stall_window=8, anorm=0.0,
                strict=1e-14):
    """Right-preconditioned restarted GMRES on row-shaped arrays.

    Cycles continue toward the relative residual ``strict`` while the true
    residual keeps falling.  Acceptance is a normwise backward-error test,
    ``|r| <= tol * (|b| + anorm * |x|)`` (``anorm = 0``: relative residual);
    it is checked once a restart cycle fails to halve the residual.  A
    stalled iterate that fails the test raises StagnationError.
    ``stall_window`` is kept for signature compatibility.
    """
    shape = rhs.shape
    dtype = np.result_type(rhs, float)
    b = rhs.reshape(-1)
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(shape, dtype=dtype), SolveInfo(0, [0.0], True)
    x = np.zeros(shape, dtype=dtype) if x0 is None else np.array(x0, dtype=dtype)
    op = spla.LinearOperator((b.size, b.size), matvec=lambda y: apply(precond(y.reshape(shape))).reshape(-1),
                             dtype=dtype)

    def accepted(rn, x):
        return rn <= tol * (bnorm + anorm * float(np.linalg.norm(x)))

    r = b - apply(x).reshape(-1)
    rn = float(np.linalg.norm(r))
    hist = [rn / bnorm]
    steps = 0
    while steps < maxiter and rn > strict * bnorm:
        stalled = [0, rn]
        count = [0]

        def cb(v):
            count[0] += 1
            v = float(v) * rn
            if v >= stalled[1] * (1 - 1e-3):
                stalled[0] += 1
            else:
                stalled[0] = 0
            stalled[1] = min(stalled[1], v)

        y, _ = spla.gmres(op, r, rtol=strict * bnorm / rn, atol=0.0, restart=restart, maxiter=1,
                          callback=cb, callback_type="pr_norm")
        steps += max(count[0], 1)
        xn = x + precond(y.reshape(shape))
        rnew = b - apply(xn).reshape(-1)
        rnn = float(np.linalg.norm(rnew))
        if rnn < rn:
            x, r = xn, rnew
        progress = rnn < 0.5 * rn
        rn = min(rn, rnn)
        hist.append(rn / bnorm)
        if not progress:
            break
    if rn > strict * bnorm and not accepted(rn, x):
        raise StagnationError(f"Krylov solve stalled at relative residual {rn / bnorm:.3e} after {steps} steps")
    return x, SolveInfo(steps, hist, True)


# ---------------------------------------------------------------- model problem

def model_operator(grid: CollarGrid, mass: float, bc_kind: str) -> SlabOperator:
    """Flat operator u -> mass u + div(x_N^2 grad lap u) with model conditions."""
    alg = algebra(grid.ndim)
    E = geometry_jets(grid, None, 1.0).E
    w = coordinate_jet(alg, 1, grid.ndim - 1, grid.coords()[-1], grid.shape)
    coeffs = slab_coefficients(grid, w * w, E)
    bottom, top = ("neumann", "robin") if bc_kind == "neumann0" else ("dirichlet", "simply_supported")
    return SlabOperator(grid, coeffs, mass, bottom, top)


def model_parabolic_step(state, dt, f, g, bc_kind, scheme):
    from .mesh import ScalarField

    axes = state.axes
    grid = CollarGrid(axes[:-1], axes[-1], "strip", 1.0)
    u_old = np.asarray(state.values, dtype=float)
    if scheme == "implicit_euler":
        mass = 1.0 / dt
    elif scheme == "crank_nicolson":
        mass = 2.0 / dt
    else:
        raise ConfigError(f"unknown scheme {scheme}")
    op = model_operator(grid, mass, bc_kind)
    rhs = mass * u_old + f
    M = u_old.shape[-1] - 1
    rhs[..., 0] = g
    rhs[..., M - 1] = 0.0
    rhs[..., M] = 0.0
    u, _ = op.solve(rhs, x0=u_old)
    if scheme == "crank_nicolson":
        u = 2.0 * u - u_old
    t = None if state.time_stamp is None else state.time_stamp + dt
    return ScalarField(axes, u, t)
