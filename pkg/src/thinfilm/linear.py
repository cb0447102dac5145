"""Linear solves in the fixed collar domain.

Slab n (implicit Euler, t_n = t0 + n dt) of the coupled problem reads

    (u^n - u^{n-1})/dt + L u^n - A [(d^n - d^{n-1})/dt + L d^n] + Q1 = f^n
    B u^n - A B d^n + Q2 = g^n          on the contact boundary
    u^n = phi^n                         on the contact boundary
    T1 u^n = T2 u^n = 0                 on the top boundary (value and Laplacian by default)

where d = E delta is the extended boundary unknown, L = div(w^2 grad lap)
in the metric of the background deviation sigma, and B is the inward
normal derivative.  The principal part is inverted by splitting:
v = u - A d solves a Neumann problem, delta = (phi - v)/A on the boundary.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractionError, DegeneracyError
from .geometry import BoundaryField, cutoff, extend_boundary_function, field_jet
from .grid import CollarGrid, multi_indices
from .mesh import FieldSeries, ScalarField
from .nodal import SlabOperator, gmres_solve, geometry_jets, slab_coefficients


def _slabs(x, n1, shape, name):
    """Coerce data to an array of shape (n1, *shape); None means zeros."""
    if x is None:
        return np.zeros((n1,) + tuple(shape))
    if isinstance(x, FieldSeries):
        x = x.array()
    elif isinstance(x, BoundaryField):
        x = x.values
    elif isinstance(x, ScalarField):
        x = np.broadcast_to(np.asarray(x.values), (n1,) + tuple(shape))
    x = np.asarray(x, dtype=float)
    if x.shape == tuple(shape):
        x = np.broadcast_to(x, (n1,) + tuple(shape))
    if x.shape != (n1,) + tuple(shape):
        raise ConfigError(f"{name} has shape {x.shape}, expected {(n1,) + tuple(shape)}")
    return np.array(x)


@dataclass(eq=False)
class LinearCoefficients:
    """Background data of the linear problems, one entry per time level
    (index 0 is the initial level)."""

    grid: CollarGrid
    dt: float
    w: np.ndarray
    sigma_b: np.ndarray
    gamma0: float
    A: np.ndarray | None = None
    top: str = "simply_supported"
    t0: float = 0.0
    _ops: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        g = self.grid
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim == g.ndim:
            raise ConfigError("w needs a leading time-level axis")
        n1 = self.w.shape[0]
        self.sigma_b = _slabs(self.sigma_b, n1, g.tshape, "sigma_b")
        if self.A is not None:
            self.A = _slabs(self.A, n1, g.shape, "A")
            if np.min(self.A[..., 0]) <= 0:
                raise DegeneracyError("coefficient A must be positive on the contact boundary")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if np.any(self.w[0][..., 1:] <= 0):
            raise DegeneracyError("background height must be positive inside the domain")

    @classmethod
    def model(cls, grid: CollarGrid, dt: float, nslabs: int, gamma0: float = 0.5, top: str = "robin"):
        """w = distance to the wall, sigma = 0: the flat model operator."""
        lam = np.broadcast_to(grid.coords()[-1], grid.shape)
        w = np.broadcast_to(lam, (nslabs + 1,) + grid.shape)
        return cls(grid, dt, w, np.zeros((nslabs + 1,) + grid.tshape), gamma0, None, top)

    @property
    def nslabs(self) -> int:
        return self.w.shape[0] - 1

    def times(self):
        return self.t0 + self.dt * np.arange(self.nslabs + 1)

    def A_field(self, n: int) -> np.ndarray:
        if self.A is not None:
            return self.A[n]
        g = self.grid
        wl = g.normal_derivative(self.w[n], 1)
        sl = self.sigma_b[n][..., None] * (cutoff(g.lam / self.gamma0, 1) / self.gamma0)
        return wl / (1.0 + sl)

    def operator(self, n: int, bottom: str = "neumann") -> SlabOperator:
        key = (n, bottom)
        if key not in self._ops:
            coeffs = self._coefficients(n)
            self._ops[key] = SlabOperator(self.grid, coeffs, 1.0 / self.dt, bottom, self.top)
        return self._ops[key]

    def _coefficients(self, n):
        ck = ("coef", n)
        if ck not in self._ops:
            E = geometry_jets(self.grid, self.sigma_b[n], self.gamma0).E
            wj = field_jet(self.grid, self.w[n], K=1)
            self._ops[ck] = slab_coefficients(self.grid, wj * wj, E)
        return self._ops[ck]

    def extend(self, delta_b) -> np.ndarray:
        return extend_boundary_function(delta_b, self.grid, self.gamma0, check=False)


@dataclass(eq=False)
class LowerOrderTerms:
    """Coefficient fields of the lower-order functionals.

    Q1 = q d_t + sum_{|b|=3} q1_b dist^{3/2} D^b d + sum_{|b|=2} q2_b dist^{1/2} D^b d
         + sum_{|b|<=1} q3_b D^b d + sum_{|b|<=1} q4_b D^b u
    Q2 = sum_{|b|=1} b1_b D^b u + sum_{|b|=1} b2_b D^b d + b3 delta

    Volume fields have shape (levels, *grid.shape), boundary fields
    (levels, *grid.tshape).  Derivatives are taken in collar coordinates.
    """

    dist: np.ndarray
    q: np.ndarray | None = None
    q1: dict = field(default_factory=dict)
    q2: dict = field(default_factory=dict)
    q3: dict = field(default_factory=dict)
    q4: dict = field(default_factory=dict)
    b1: dict = field(default_factory=dict)
    b2: dict = field(default_factory=dict)
    b3: np.ndarray | None = None

    def sup(self) -> float:
        vals = [0.0]
        for d in (self.q1, self.q2, self.q3, self.q4, self.b1, self.b2):
            vals += [float(np.max(np.abs(v))) for v in d.values()]
        for v in (self.q, self.b3):
            if v is not None:
                vals.append(float(np.max(np.abs(v))))
        return max(vals)

    def q1_apply(self, grid: CollarGrid, n: int, u, d, d_prev, dt) -> np.ndarray:
        out = np.zeros(grid.shape)
        if self.q is not None:
            out += self.q[n] * (d - d_prev) / dt
        for coef, wt in ((self.q1, self.dist**1.5), (self.q2, np.sqrt(self.dist)), (self.q3, 1.0)):
            for b, c in coef.items():
                out += c[n] * wt * grid.derivative(d, b)
        for b, c in self.q4.items():
            out += c[n] * grid.derivative(u, b)
        return out

    def q2_apply(self, grid: CollarGrid, n: int, u, d, delta) -> np.ndarray:
        out = np.zeros(grid.tshape)
        for b, c in self.b1.items():
            out += c[n] * grid.derivative(u, b)[..., 0]
        for b, c in self.b2.items():
            out += c[n] * grid.derivative(d, b)[..., 0]
        if self.b3 is not None:
            out += self.b3[n] * delta
        return out

    @classmethod
    def random(cls, grid: CollarGrid, times, amplitude: float, seed: int = 0, weight=None, ramp_time: float = 0.1):
        """Smooth fixed-seed coefficients that grow linearly from zero at
        t = 0 and reach size ``amplitude`` at ``ramp_time``."""
        from .holder import WeightFunction

        rng = np.random.default_rng(seed)
        wf = weight or WeightFunction("wall_normal" if grid.kind == "strip" else "disk")
        dist = wf.on_grid(grid)
        times = np.asarray(times, dtype=float)
        ramp = times / ramp_time
        coords = grid.full_coords()
        tc = [c[..., 0] for c in coords[:-1]]

        def vol():
            a = rng.uniform(-1, 1, 4)
            om = coords[0] if len(coords) > 1 else 0.0
            prof = a[0] + a[1] * np.cos(om + a[2]) + a[3] * coords[-1]
            prof = prof / max(1e-12, np.max(np.abs(prof)))
            return amplitude * ramp.reshape((-1,) + (1,) * grid.ndim) * prof[None]

        def bnd():
            a = rng.uniform(-1, 1, 3)
            om = tc[0] if tc else np.zeros(())
            prof = a[0] + a[1] * np.sin(om + a[2])
            prof = np.broadcast_to(prof / max(1e-12, np.max(np.abs(prof))), grid.tshape)
            return amplitude * ramp.reshape((-1,) + (1,) * len(grid.tshape)) * prof[None]

        nd = grid.ndim
        third = [b for b in multi_indices(nd, 3) if sum(b) == 3]
        second = [b for b in multi_indices(nd, 2) if sum(b) == 2]
        low = multi_indices(nd, 1)
        first = [b for b in low if sum(b) == 1]
        return cls(
            dist=dist,
            q=vol(),
            q1={b: vol() for b in third},
            q2={b: vol() for b in second},
            q3={b: vol() for b in low},
            q4={b: vol() for b in low},
            b1={b: bnd() for b in first},
            b2={b: bnd() for b in first if b[-1] == 0},
            b3=bnd(),
        )


@dataclass(eq=False)
class CoupledSolution:
    u: FieldSeries
    delta: BoundaryField
    residual_history: list = field(default_factory=list)
    picard_factors: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)

    @property
    def contraction_factor(self) -> float:
        f = [x for x in self.picard_factors if np.isfinite(x)]
        return max(f) if f else 0.0


# ---------------------------------------------------------------- uncoupled solves

def _check_compat(mag, tol, what):
    if mag > tol:
        warnings.warn(f"{what} compatibility violated: mismatch {mag:.3g}", RuntimeWarning)
    return mag


def _march(coeffs: LinearCoefficients, f, wall, psi0, bottom, top_data=None, compat_tol=1e-6):
    g = coeffs.grid
    n1 = coeffs.nslabs + 1
    f = _slabs(f, n1, g.shape, "f")
    wall = _slabs(wall, n1, g.tshape, "boundary data")
    top = _slabs(top_data, n1, g.tshape + (2,), "top data") if top_data is not None else None
    u0 = np.zeros(g.shape) if psi0 is None else np.asarray(getattr(psi0, "values", psi0), dtype=float)
    op0 = coeffs.operator(0, bottom)
    _check_compat(float(np.max(np.abs(op0.apply(u0)[..., 0] - wall[0]))), compat_tol, f"{bottom} data")
    M = g.normal.size - 1
    out = [u0]
    iters = []
    for n in range(1, n1):
        op = coeffs.operator(n, bottom)
        rhs = f[n] + out[-1] / coeffs.dt
        rhs[..., 0] = wall[n]
        rhs[..., M - 1] = 0.0 if top is None else top[n][..., 1]
        rhs[..., M] = 0.0 if top is None else top[n][..., 0]
        u, info = op.solve(rhs, x0=out[-1])
        iters.append(info.iterations)
        out.append(u)
    series = FieldSeries.from_array(g.axes, np.array(out), coeffs.dt, coeffs.t0)
    object.__setattr__(series, "inner_iterations", iters)
    return series


def solve_linearized_neumann(coeffs: LinearCoefficients, f, g, psi0=None, top_data=None, compat_tol=1e-6) -> FieldSeries:
    """Time-march u_t + L u = f with the inward normal derivative B u = g."""
    return _march(coeffs, f, g, psi0, "neumann", top_data, compat_tol)


def solve_linearized_dirichlet(coeffs: LinearCoefficients, f, phi, psi0=None, top_data=None, compat_tol=1e-6) -> FieldSeries:
    """Time-march u_t + L u = f with u = phi on the contact boundary."""
    return _march(coeffs, f, phi, psi0, "dirichlet", top_data, compat_tol)


# ---------------------------------------------------------------- coupled system

@dataclass(eq=False)
class CoupledSystem:
    """Exact slab operator J and its principal part P for the coupled problem."""

    coeffs: LinearCoefficients
    lower: LowerOrderTerms | None = None

    @property
    def grid(self):
        return self.coeffs.grid

    def _M(self):
        return self.grid.normal.size - 1

    def exact(self, n, u, delta, u_prev, delta_prev):
        c = self.coeffs
        M = self._M()
        op = c.operator(n)
        d, dp = c.extend(delta), c.extend(delta_prev)
        A = c.A_field(n)
        Au, Ad = op.apply(u), op.apply(d)
        ru = Au.copy()
        ru[..., 1 : M - 1] -= (u_prev / c.dt + A * (Ad - dp / c.dt))[..., 1 : M - 1]
        r2 = Au[..., 0] - A[..., 0] * Ad[..., 0]
        ru[..., 0] = u[..., 0]
        if self.lower is not None:
            ru[..., 1 : M - 1] += self.lower.q1_apply(self.grid, n, u, d, dp, c.dt)[..., 1 : M - 1]
            r2 = r2 + self.lower.q2_apply(self.grid, n, u, d, delta)
        return ru, r2

    def principal(self, n, u, delta, u_prev, delta_prev):
        c = self.coeffs
        M = self._M()
        op = c.operator(n)
        v = u - c.A_field(n) * c.extend(delta)
        vp = u_prev - c.A_field(n - 1) * c.extend(delta_prev)
        rv = op.apply(v)
        r2 = rv[..., 0].copy()
        rv[..., 1 : M - 1] -= (vp / c.dt)[..., 1 : M - 1]
        rv[..., 0] = u[..., 0]
        return rv, r2

    def principal_solve(self, n, ru, r2, u_prev, delta_prev, x0=None):
        """Invert the principal part by the v = u - A E delta splitting."""
        c = self.coeffs
        M = self._M()
        op = c.operator(n)
        A = c.A_field(n)
        vp = u_prev - c.A_field(n - 1) * c.extend(delta_prev)
        rhs = np.array(ru, dtype=float)
        rhs[..., 1 : M - 1] += (vp / c.dt)[..., 1 : M - 1]
        rhs[..., 0] = r2
        v, info = op.solve(rhs, x0=x0)
        delta = (ru[..., 0] - v[..., 0]) / A[..., 0]
        u = v + A * c.extend(delta)
        return u, delta, info.iterations

    def row_scale(self, n):
        return self.coeffs.operator(n).row_scale()


def _data(coeffs, f, g, phi, top_data=None):
    grid = coeffs.grid
    n1 = coeffs.nslabs + 1
    M = grid.normal.size - 1
    f = _slabs(f, n1, grid.shape, "f")
    g = _slabs(g, n1, grid.tshape, "g")
    phi = _slabs(phi, n1, grid.tshape, "phi")
    bu = f.copy()
    bu[..., 0] = phi
    if top_data is None:
        bu[..., M - 1] = 0.0
        bu[..., M] = 0.0
    else:
        top = _slabs(top_data, n1, grid.tshape + (2,), "top data")
        bu[..., M - 1] = top[..., 1]
        bu[..., M] = top[..., 0]
    return bu, g


def _norm(u, d):
    return math.sqrt(float(np.sum(u * u)) + float(np.sum(d * d)))


def solve_coupled_system(system: CoupledSystem, bu, b2, picard_tol=1e-8, max_picard=30, method="picard",
                         krylov_tol=1e-9) -> CoupledSolution:
    """Solve J x = b over all slabs (zero initial level).

    ``picard``: x <- P^{-1}(b - (J - P) x), swept over the whole time
    interval; the measured contraction factor is the ratio of successive
    update norms.  ``krylov``: slab-by-slab GMRES on J, right-preconditioned
    with the splitting solve.
    """
    c = system.coeffs
    grid = c.grid
    n1 = c.nslabs + 1
    U = np.zeros((n1,) + grid.shape)
    D = np.zeros((n1,) + grid.tshape)
    hist, factors, inner = [], [], []
    if method == "krylov":
        for n in range(1, n1):
            U[n], D[n], its = _krylov_slab(system, n, bu[n], b2[n], U[n - 1], D[n - 1], krylov_tol)
            inner.append(its)
        hist.append(0.0)
        return _pack(c, U, D, hist, factors, inner)
    if method != "picard":
        raise ConfigError(f"unknown coupled method {method}")
    prev_diff = None
    for k in range(max_picard):
        Un = np.zeros_like(U)
        Dn = np.zeros_like(D)
        for n in range(1, n1):
            ru, r2 = bu[n].copy(), b2[n].copy()
            if k > 0:
                je = system.exact(n, U[n], D[n], U[n - 1], D[n - 1])
                jp = system.principal(n, U[n], D[n], U[n - 1], D[n - 1])
                ru -= je[0] - jp[0]
                r2 = r2 - (je[1] - jp[1])
            Un[n], Dn[n], its = system.principal_solve(n, ru, r2, Un[n - 1], Dn[n - 1], x0=U[n])
            inner.append(its)
        diff = _norm(Un - U, Dn - D)
        size = max(_norm(Un, Dn), 1e-300)
        hist.append(diff / size)
        if prev_diff is not None and prev_diff > 0:
            factors.append(diff / prev_diff)
        U, D = Un, Dn
        if diff <= picard_tol * size or diff == 0.0:
            return _pack(c, U, D, hist, factors, inner)
        if len(factors) >= 2 and factors[-1] >= 1.0 and factors[-2] >= 1.0:
            raise ContractionError(f"Picard iteration does not contract (factor {factors[-1]:.3g}); reduce T")
        prev_diff = diff
    raise ContractionError(f"Picard iteration did not reach {picard_tol:.1e} in {max_picard} sweeps "
                           f"(last update {hist[-1]:.3e}, factor {factors[-1] if factors else float('nan'):.3g})")


def _krylov_slab(system, n, ru, r2, u_prev, d_prev, tol):
    grid = system.grid
    nu = int(np.prod(grid.shape))
    zero_u = np.zeros(grid.shape)
    zero_d = np.zeros(grid.tshape)
    s = system.row_scale(n)
    # right-hand side: move the previous level to the data
    pu, p2 = system.exact(n, zero_u, zero_d, u_prev, d_prev)
    bu_ = ru - pu
    b2_ = r2 - p2

    def pack(a, b):
        return np.concatenate([(a * s).ravel(), (b * s[0]).ravel()])

    def unpack(x):
        return x[:nu].reshape(grid.shape), x[nu:].reshape(grid.tshape)

    def apply(x):
        u, d = unpack(x)
        return pack(*system.exact(n, u, d, zero_u, zero_d))

    def precond(r):
        a, b = unpack(r)
        u, d, _ = system.principal_solve(n, a / s, b / s[0], zero_u, zero_d)
        return np.concatenate([u.ravel(), d.ravel()])

    x, info = gmres_solve(apply, precond, pack(bu_, b2_), None, tol, restart=30, maxiter=10,
                          anorm=system.coeffs.operator(n)._anorm)
    u, d = unpack(x)
    return u, d, info.iterations


def _pack(c, U, D, hist, factors, inner):
    grid = c.grid
    u = FieldSeries.from_array(grid.axes, U, c.dt, c.t0)
    d = BoundaryField(grid.tangential, D, c.dt, c.t0)
    return CoupledSolution(u, d, hist, factors, inner)


def solve_coupled_model(A: float, f, g, phi, dt: float, T: float | None = None, grid: CollarGrid | None = None,
                        gamma0: float = 0.5, top: str = "robin") -> CoupledSolution:
    """Constant A, flat model coefficients, no lower-order terms: one
    Neumann solve for v and pointwise algebra for delta and u."""
    if not A > 0 or not np.isfinite(A) or A + 1.0 / A > 1e12:
        raise ConfigError("A must be positive and moderate")
    if grid is None:
        if not isinstance(f, FieldSeries):
            raise ConfigError("pass a grid or f as a FieldSeries")
        axes = f.slabs[0].axes
        grid = CollarGrid(axes[:-1], axes[-1], "strip", 1.0)
    fa = f.array() if isinstance(f, FieldSeries) else np.asarray(f, dtype=float)
    nslabs = fa.shape[0] - 1
    if T is not None and abs(nslabs * dt - T) > 1e-9 * max(1.0, T):
        raise ConfigError("T must equal (levels - 1) * dt")
    coeffs = LinearCoefficients.model(grid, dt, nslabs, gamma0, top)
    coeffs.A = np.full((nslabs + 1,) + grid.shape, float(A))
    system = CoupledSystem(coeffs, None)
    bu, b2 = _data(coeffs, fa, g, phi)
    return _split_once(system, bu, b2)


def _split_once(system, bu, b2):
    c = system.coeffs
    n1 = c.nslabs + 1
    U = np.zeros((n1,) + c.grid.shape)
    D = np.zeros((n1,) + c.grid.tshape)
    inner = []
    for n in range(1, n1):
        U[n], D[n], its = system.principal_solve(n, bu[n], b2[n], U[n - 1], D[n - 1])
        inner.append(its)
    return _pack(c, U, D, [0.0], [], inner)


def solve_coupled_full(coeffs: LinearCoefficients, f, g, phi, lower: LowerOrderTerms | None = None,
                       picard_tol: float = 1e-8, max_picard: int = 30, method: str = "picard",
                       top_data=None) -> CoupledSolution:
    system = CoupledSystem(coeffs, lower)
    bu, b2 = _data(coeffs, f, g, phi, top_data)
    return solve_coupled_system(system, bu, b2, picard_tol, max_picard, method)


def coupled_residual(system: CoupledSystem, sol: CoupledSolution, bu, b2) -> float:
    """Max nodewise residual of the exact coupled equations, row-scaled."""
    U = sol.u.array()
    D = sol.delta.values
    worst = 0.0
    for n in range(1, U.shape[0]):
        ru, r2 = system.exact(n, U[n], D[n], U[n - 1], D[n - 1])
        s = system.row_scale(n)
        worst = max(worst, float(np.max(np.abs((ru - bu[n]) * s))), float(np.max(np.abs((r2 - b2[n]) * s[0]))))
    return worst
