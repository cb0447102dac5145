"""Model problems on the periodic strip.

Each tangential Fourier mode of ``u_t + div(x_N^2 grad lap u) = f``
reduces to a degenerate fourth-order ODE in x_N,

    (x^2 v''')' - 2 k2 x^2 v'' - 2 k2 x v' + k2^2 x^2 v + p v = h,

solved here as a first-order system for (v, v', v'', w3 = x^2 v''').
Regularity at the degenerate wall is the condition w3(0) = 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularSystem, SolverError, ConfigError
from .geometry import cutoff
from .mesh import Mesh1D, PeriodicAxis, ScalarField

PAIRINGS = {"neumann0": "robin_top", "dirichlet0": "simply_supported_top"}


@dataclass(frozen=True, eq=False)
class ModeProblem:
    k2: float
    p: complex
    rhs: np.ndarray
    bc_kind: str = "neumann0"
    top_bc: str = "robin_top"
    a_top: complex = 0.0
    bottom_value: complex = 0.0

    def __post_init__(self):
        if self.bc_kind not in PAIRINGS:
            raise ConfigError(f"unknown bottom condition {self.bc_kind}")
        if PAIRINGS[self.bc_kind] != self.top_bc:
            raise ConfigError(f"{self.bc_kind} pairs with {PAIRINGS[self.bc_kind]}, not {self.top_bc}")
        if self.k2 < 0:
            raise ValueError("k2 must be nonnegative")
        if np.real(self.p) < 0:
            raise ValueError("Re p must be nonnegative")


@dataclass(frozen=True, eq=False)
class ModeSolution:
    x: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    d2v: np.ndarray  # NaN at the wall node
    w3: np.ndarray

    @property
    def d3v(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.w3 / self.x**2
        out[0] = np.nan
        return out


# ---------------------------------------------------------------- mode solver

def _layout(M):
    """Node-interleaved unknown numbering; v'' has no unknown at the wall."""
    idx = {}
    n = 0
    for j in range(M + 1):
        for var in ("v", "y1", "y2", "w3"):
            if var == "y2" and j == 0:
                continue
            idx[var, j] = n
            n += 1
    return idx, n


_GX, _GW = np.polynomial.legendre.leggauss(10)


def _hermite_weights(a, c, power):
    """Exact-for-smooth weights of int_a^c H(x) x^-power dx for the four
    cubic Hermite basis functions (value a, slope a, value c, slope c)."""
    h = c - a
    t = 0.5 * (_GX + 1.0)
    xs = a + h * t
    w = 0.5 * h * _GW * xs ** (-power)
    basis = (2 * t**3 - 3 * t**2 + 1, h * (t**3 - 2 * t**2 + t), -2 * t**3 + 3 * t**2, h * (t**3 - t**2))
    return [float(np.dot(w, b)) for b in basis]


@dataclass(eq=False)
class _Collocation:
    """Sparse collocation system with the k2 dependence kept separate.

    The matrix of a mode is S0(p) + k2 S1 + k2^2 S2, so the same rows also
    assemble the dense tangentially coupled system.
    """

    x: np.ndarray
    p: complex
    bc_kind: str
    top_bc: str

    def __post_init__(self):
        x = self.x
        M = x.size - 1
        self.idx, self.n = _layout(M)
        ent = {0: ([], [], []), 1: ([], [], []), 2: ([], [], [])}
        load = ([], [], [], [])  # row, node, coefficient, 0 = f / 1 = f'
        r = [0]
        idx = self.idx
        p = self.p

        def put(var, j, val, kpow=0):
            R, C, V = ent[kpow]
            R.append(r[0]); C.append(idx[var, j]); V.append(val)

        def src(j, val, deriv=0):
            load[0].append(r[0]); load[1].append(j); load[2].append(val); load[3].append(deriv)

        def G(j, s):
            # G = f + 2k2 x^2 y2 + 2k2 x y1 - k2^2 x^2 v - p v, times -s
            xj = x[j]
            if j > 0:
                put("y2", j, -s * 2 * xj * xj, 1)
            put("y1", j, -s * 2 * xj, 1)
            put("v", j, s * xj * xj, 2)
            put("v", j, s * p)
            src(j, s)

        def dG(j, s):
            # G' = f' + 6k2 x y2 + 2k2 w3 + (2k2 - k2^2 x^2 - p) y1 - 2 k2^2 x v, times -s
            xj = x[j]
            if j > 0:
                put("y2", j, -s * 6 * xj, 1)
            put("w3", j, -s * 2, 1)
            put("y1", j, -s * 2, 1)
            put("y1", j, s * xj * xj, 2)
            put("y1", j, s * p)
            put("v", j, s * 2 * xj, 2)
            src(j, s, 1)

        for j in range(M):
            a, c = x[j], x[j + 1]
            h = c - a
            h12 = h * h / 12
            # Integrating by parts moves every integral onto w3, which is
            # smooth up to the wall; w3 is cubic Hermite on the cell with
            # slopes G.  The wall value w3_0 = 0 is dropped where its weight
            # would be singular.
            Q0 = _hermite_weights(a, c, 0)
            Q1 = _hermite_weights(a, c, 1) if j > 0 else [0.0] + _hermite_weights(a, c, 1)[1:]

            def w3int(Q):
                if j > 0:
                    put("w3", j, -Q[0])
                put("w3", j + 1, -Q[2])
                G(j, Q[1]); G(j + 1, Q[3])

            # v_c - v_a = c y1_c - a y1_a - (c^2 y2_c - a^2 y2_a)/2 + (1/2) int w3
            put("v", j + 1, 1.0); put("v", j, -1.0)
            put("y1", j + 1, -c); put("y1", j, a)
            put("y2", j + 1, c * c / 2)
            if j > 0:
                put("y2", j, -a * a / 2)
            w3int([q / 2 for q in Q0])
            r[0] += 1
            # y1_c - y1_a = c y2_c - a y2_a - int w3 / x
            put("y1", j + 1, 1.0); put("y1", j, -1.0)
            put("y2", j + 1, -c)
            if j > 0:
                put("y2", j, a)
            w3int([-q for q in Q1])
            r[0] += 1
            # y2_c - y2_a = int w3 / x^2
            if j > 0:
                put("y2", j + 1, 1.0); put("y2", j, -1.0)
                w3int(_hermite_weights(a, c, 2))
                r[0] += 1
            # w3' = G
            put("w3", j + 1, 1.0); put("w3", j, -1.0)
            G(j, h / 2); G(j + 1, h / 2)
            dG(j, h12); dG(j + 1, -h12)
            r[0] += 1
        self.bottom_row = r[0] + 1
        put("w3", 0, 1.0); r[0] += 1
        put("y1" if self.bc_kind == "neumann0" else "v", 0, 1.0); r[0] += 1
        put("v", M, 1.0); r[0] += 1
        self.top_row = r[0]
        if self.top_bc == "robin_top":
            put("w3", M, 1.0); put("y2", M, 1.0); put("y1", M, -1.0, 1)
        else:
            put("y2", M, 1.0)
        r[0] += 1
        assert r[0] == self.n
        shape = (self.n, self.n)
        self.S = [sp.csc_matrix((np.asarray(ent[k][2], dtype=complex), (ent[k][0], ent[k][1])), shape=shape)
                  for k in range(3)]
        self.load = [np.asarray(v) for v in load]

    def matrix(self, k2):
        return self.S[0] + k2 * self.S[1] + (k2 * k2) * self.S[2]

    def rhs_vector(self, f, a_top=0.0, bottom=0.0):
        from .mesh import derivative_matrix

        f = np.asarray(f, dtype=complex)
        df = derivative_matrix(self.x, 1) @ f
        rows, nodes, coef, which = self.load
        vals = coef * np.where(which == 0, f[nodes], df[nodes])
        b = np.zeros(self.n, dtype=complex)
        np.add.at(b, rows, vals)
        b[self.bottom_row] = bottom
        b[self.top_row] = a_top
        return b

    def unpack(self, sol):
        M = self.x.size - 1
        get = lambda var: np.array([sol[self.idx[var, j]] if (var, j) in self.idx else np.nan for j in range(M + 1)])
        return ModeSolution(self.x.copy(), get("v"), get("y1"), get("y2"), get("w3"))


def _factor(A, what):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            return spla.splu(sp.csc_matrix(A))
    except (RuntimeError, spla.MatrixRankWarning) as exc:
        raise SingularSystem(f"singular mode system ({what})") from exc


def mode_ode_solve(problem: ModeProblem, mesh: Mesh1D) -> ModeSolution:
    x = mesh.nodes
    rhs = np.asarray(problem.rhs, dtype=complex) * np.ones_like(x)
    if rhs.shape != x.shape:
        raise ValueError("rhs must be sampled on the mesh nodes")
    if not np.all(np.isfinite(rhs)):
        raise SolverError("non-finite right-hand side")
    sys_ = _Collocation(x, complex(problem.p), problem.bc_kind, problem.top_bc)
    lu = _factor(sys_.matrix(float(problem.k2)), f"k2={problem.k2}, p={problem.p}")
    sol = lu.solve(sys_.rhs_vector(rhs, problem.a_top, problem.bottom_value))
    if not np.all(np.isfinite(sol)):
        raise SingularSystem(f"singular mode system (k2={problem.k2}, p={problem.p})")
    return sys_.unpack(sol)


# ---------------------------------------------------------------- quadrature oracle

def _cum_hermite(f, df, x):
    """Cumulative integral from x_0 with end-corrected trapezoid cells;
    the first cell is plain trapezoid."""
    h = np.diff(x)
    cell = 0.5 * h * (f[1:] + f[:-1])
    corr = h * h / 12 * (df[:-1] - df[1:])
    corr[0] = 0.0
    out = np.zeros_like(f)
    out[1:] = np.cumsum(cell + corr)
    return out


def explicit_mode0_solution(mesh: Mesh1D, rhs, a_top: complex = 0.0, bc_kind="neumann0", top_bc="robin_top") -> ModeSolution:
    """Direct quadrature of the k2 = p = 0 Neumann/Robin problem.

    H(x) = int_0^x h;  v''' = H/x^2;  v'' = a - H/x - int_x^1 h/t;
    v' = a x - int_0^x H/s - H - x int_x^1 h/t;  v(1) = 0.
    """
    from .mesh import derivative_matrix

    if (bc_kind, top_bc) != ("neumann0", "robin_top"):
        raise ConfigError("the explicit solution covers the Neumann/Robin pairing only")
    x = mesh.nodes
    h = np.asarray(rhs, dtype=complex) * np.ones_like(x)
    dh = derivative_matrix(x, 1) @ h
    H = _cum_hermite(h, dh, x)
    # tail[j] = int_{x_j}^1 h/t with h cubic Hermite per cell
    cell = np.zeros(x.size - 1, dtype=complex)
    for j in range(1, x.size - 1):
        q = _hermite_weights(x[j], x[j + 1], 1)
        cell[j] = q[0] * h[j] + q[1] * dh[j] + q[2] * h[j + 1] + q[3] * dh[j + 1]
    tail = np.zeros_like(h)
    tail[1:-1] = np.cumsum(cell[1:][::-1])[::-1]
    Hx = np.empty_like(h)
    Hx[1:] = H[1:] / x[1:]
    Hx[0] = h[0]
    dHx = np.empty_like(h)
    dHx[1:] = (h[1:] - Hx[1:]) / x[1:]
    dHx[0] = dh[0] / 2
    d2v = a_top - Hx - tail
    dv = a_top * x - _cum_hermite(Hx, dHx, x) - H - x * tail
    dv[0] = 0.0
    d2v[0] = 0.0  # only used in the (disabled) first-cell correction
    V = _cum_hermite(dv, d2v, x)
    v = V - V[-1]
    d2v[0] = np.nan
    w3 = H.copy()
    return ModeSolution(x.copy(), v, dv, d2v, w3)


# ---------------------------------------------------------------- Fourier

def fourier_decompose(field_: ScalarField) -> np.ndarray:
    """Mode profiles c_k(x_N) with u = sum_k c_k exp(i k (x' + pi)).

    The phase origin is the left end of each periodic axis, so the
    coefficients are exactly the normalized DFT.  Returned in numpy FFT
    order with the wall-normal axis last.
    """
    nt = _check_strip(field_)
    if nt == 0:
        return np.asarray(field_.values, dtype=complex)
    axes = tuple(range(nt))
    size = int(np.prod(field_.shape[:nt]))
    return np.fft.fftn(field_.values, axes=axes) / size


def fourier_reconstruct(modes: np.ndarray, axes: tuple, real: bool = True) -> ScalarField:
    nt = len(axes) - 1
    if nt == 0:
        vals = modes
    else:
        size = int(np.prod(modes.shape[:nt]))
        vals = np.fft.ifftn(modes * size, axes=tuple(range(nt)))
    return ScalarField(axes, vals.real if real else vals)


def _check_strip(field_):
    axes = field_.axes
    if not isinstance(axes[-1], Mesh1D) or not all(isinstance(a, PeriodicAxis) for a in axes[:-1]):
        raise ValueError("model problems live on periodic axes times a wall-normal mesh")
    return len(axes) - 1


def mode_k2(axes) -> np.ndarray:
    """|k|^2 over the tangential mode grid (numpy FFT order)."""
    per = axes[:-1]
    if not per:
        return np.zeros(())
    ks = np.meshgrid(*[a.wavenumbers() for a in per], indexing="ij")
    return sum(k * k for k in ks)


def solve_modes(axes, rhs_modes, p, bc_kind, a_top_modes=None, bottom_modes=None) -> np.ndarray:
    """Solve every tangential mode; returns mode profiles of the solution."""
    x = axes[-1].nodes
    K2 = mode_k2(axes)
    sys_ = _Collocation(x, complex(p), bc_kind, PAIRINGS[bc_kind])
    out = np.zeros(np.shape(rhs_modes), dtype=complex)
    cache = {}
    failures = []
    for idx in np.ndindex(K2.shape):
        k2 = float(K2[idx])
        a = 0.0 if a_top_modes is None else a_top_modes[idx]
        b = 0.0 if bottom_modes is None else bottom_modes[idx]
        try:
            if k2 not in cache:
                cache[k2] = _factor(sys_.matrix(k2), f"k2={k2}, p={p}")
            sol = cache[k2].solve(sys_.rhs_vector(rhs_modes[idx], a, b))
        except SingularSystem as exc:
            failures.append((idx, str(exc)))
            continue
        out[idx] = sys_.unpack(sol).v
    if failures:
        raise SolverError(f"mode solves failed: {failures}")
    return out


def elliptic_solve(f: ScalarField, bc_kind: str = "neumann0", p: complex = 0.0) -> ScalarField:
    """div(x_N^2 grad lap u) + p u = f with homogeneous model conditions."""
    modes = fourier_decompose(f)
    sol = solve_modes(f.axes, modes, p, bc_kind)
    return fourier_reconstruct(sol, f.axes, real=np.isrealobj(f.values))


def dense_elliptic_solve(f: ScalarField, bc_kind: str = "neumann0", p: complex = 0.0) -> ScalarField:
    """Same discretization assembled as one dense physical-space system.

    Tangential derivatives enter as a dense spectral matrix D2 (k2 becomes
    -D2), so no Fourier diagonalization is used.  Small grids only.
    """
    _check_strip(f)
    axes = f.axes
    per = axes[:-1]
    x = axes[-1].nodes
    sys_ = _Collocation(x, complex(p), bc_kind, PAIRINGS[bc_kind])
    tshape = tuple(a.count for a in per)
    nt = int(np.prod(tshape)) if per else 1
    # -Laplacian in the tangential variables as a dense matrix
    L = np.zeros((nt, nt))
    for d, ax in enumerate(per):
        n = ax.count
        k = ax.wavenumbers()
        F = np.fft.fft(np.eye(n), axis=0)
        D2 = np.real(np.fft.ifft(np.diag(-(k**2)) @ F, axis=0))
        eyes = [np.eye(a.count) for a in per]
        eyes[d] = -D2
        block = eyes[0]
        for e in eyes[1:]:
            block = np.kron(block, e)
        L += block
    S = [m.toarray() for m in sys_.S]
    A = np.kron(np.eye(nt), S[0]) + np.kron(L, S[1]) + np.kron(L @ L, S[2])
    fv = np.asarray(f.values).reshape(nt, -1)
    b = np.concatenate([sys_.rhs_vector(fv[i]) for i in range(nt)])
    sol = np.linalg.solve(A, b).reshape(nt, sys_.n)
    v = np.stack([sys_.unpack(sol[i]).v for i in range(nt)]).reshape(tshape + (x.size,))
    return ScalarField(axes, v.real if np.isrealobj(f.values) else v)


# ---------------------------------------------------------------- time stepping

def _lift_profile(x, bc_kind, width=0.5):
    """Lift profile and its first four derivatives.

    Neumann: x * eta0(x); Dirichlet: eta0(x); eta0 is the collar cutoff
    scaled to [0, width], so the lift vanishes near the top.
    """
    s = x / width
    eta = [cutoff(s, m) / width**m for m in range(5)]
    if bc_kind == "dirichlet0":
        return eta
    # derivatives of x * eta
    return [x * eta[0]] + [m * eta[m - 1] + x * eta[m] for m in range(1, 5)]


def _apply_mode_operator(d, x, k2, p):
    """A_k phi + p phi from derivative profiles d[0..4]."""
    return (x * x * d[4] + 2 * x * d[3] - 2 * k2 * x * x * d[2] - 2 * k2 * x * d[1]
            + k2 * k2 * x * x * d[0] + p * d[0])


def compatibility_magnitude(state: ScalarField, bottom, bc_kind) -> float:
    """Mismatch between the state's wall data and the boundary datum."""
    x = state.axes[-1].nodes
    if bc_kind == "neumann0":
        from .mesh import derivative_matrix

        d = derivative_matrix(x, 1)
        wall = np.tensordot(np.asarray(state.values), d[0].toarray().ravel(), axes=([-1], [0]))
    else:
        wall = np.asarray(state.values)[..., 0]
    return float(np.max(np.abs(wall - bottom))) if np.size(wall) else 0.0


def parabolic_step(state: ScalarField, dt: float, f_slab: ScalarField | None = None, bottom_data=None,
                   bc_kind: str = "neumann0", scheme: str = "implicit_euler",
                   discretization: str = "collocation", check_compat: float | None = None) -> ScalarField:
    """One implicit step of u_t + div(x_N^2 grad lap u) = f.

    ``bottom_data`` is the wall datum at the new time level (du/dx_N for
    the Neumann pairing, u for the Dirichlet pairing); the top conditions
    are homogeneous.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    axes = state.axes
    _check_strip(state)
    x = axes[-1].nodes
    tshape = state.shape[:-1]
    f = np.zeros(state.shape) if f_slab is None else np.array(getattr(f_slab, "values", f_slab), dtype=float)
    g = np.zeros(tshape) if bottom_data is None else np.broadcast_to(np.asarray(bottom_data), tshape)
    if check_compat is not None:
        mag = compatibility_magnitude(state, g, bc_kind)
        if mag > check_compat:
            warnings.warn(f"incompatible wall data: mismatch {mag:.3g}", RuntimeWarning)
    if discretization == "nodal":
        from .nodal import model_parabolic_step

        return model_parabolic_step(state, dt, f, g, bc_kind, scheme)
    if scheme != "implicit_euler":
        raise ConfigError("Crank-Nicolson stepping is available with the nodal discretization only")
    p = 1.0 / dt
    u_old = np.asarray(state.values)
    lift = _lift_profile(x, bc_kind)
    G = g[..., None] * lift[0]
    rhs = f + p * u_old
    rhs_modes = fourier_decompose(ScalarField(axes, rhs))
    # G is separable: subtract (A + p) G using the modes of g
    nt = len(axes) - 1
    gm = np.fft.fftn(g, axes=tuple(range(nt))) / max(1, int(np.prod(tshape))) if nt else np.asarray(g, dtype=complex)
    K2 = mode_k2(axes)
    for idx in np.ndindex(K2.shape):
        rhs_modes[idx] = rhs_modes[idx] - gm[idx] * _apply_mode_operator(lift, x, K2[idx], p)
    sol = solve_modes(axes, rhs_modes, p, bc_kind)
    u = fourier_reconstruct(sol, axes).values + G
    return ScalarField(axes, u, None if state.time_stamp is None else state.time_stamp + dt)


# ---------------------------------------------------------------- identities

_SING_BASIS = (
    (lambda x: np.log(x) ** 2, 2.0),
    (lambda x: np.log(x), -1.0),
    (lambda x: np.ones_like(x), 1.0),
    (lambda x: x * np.log(x) ** 2, 0.25),
    (lambda x: x * np.log(x), -0.25),
    (lambda x: x, 0.5),
)


def _composite(x, f):
    """Composite Simpson on nonuniform panel pairs; a leftover last cell
    uses the quadratic through the last three nodes."""
    total = 0.0
    j = 0
    n = x.size - 1
    while j + 2 <= n:
        a, m, c = x[j], x[j + 1], x[j + 2]
        h0, h1 = m - a, c - m
        w0 = (h0 + h1) / 6 * (2 - h1 / h0)
        w1 = (h0 + h1) ** 3 / (6 * h0 * h1)
        w2 = (h0 + h1) / 6 * (2 - h0 / h1)
        total += w0 * f[j] + w1 * f[j + 1] + w2 * f[j + 2]
        j += 2
    if j < n:
        a, m, c = x[n - 2], x[n - 1], x[n]
        h0, h1 = m - a, c - m
        # int_m^c of the quadratic interpolant through (a, m, c)
        wa = -h1**3 / (6 * h0 * (h0 + h1))
        wm = h1 * (3 * h0 + h1) / (6 * h0)
        wc = h1 * (3 * h0 + 2 * h1) / (6 * (h0 + h1))
        total += wa * f[n - 2] + wm * f[n - 1] + wc * f[n]
    return total


def singular_quad(x: np.ndarray, f: np.ndarray, nfit: int = 6) -> complex:
    """Integral over [0, 1] of nodal samples that may grow like ln^2 x.

    The value at x = 0 is ignored.  A local expansion in
    {1, ln x, ln^2 x} and the same times x is fitted on the first nodes,
    integrated exactly, and the remainder (which vanishes at the wall) is
    integrated with composite Simpson.
    """
    f = np.asarray(f, dtype=complex)
    xs = x[1 : nfit + 1]
    B = np.stack([phi(xs) for phi, _ in _SING_BASIS], axis=1)
    scale = np.max(np.abs(B), axis=0)
    coef = np.linalg.solve(B / scale, f[1 : nfit + 1]) / scale
    exact = sum(c * I for c, (_, I) in zip(coef, _SING_BASIS))
    rem = np.zeros_like(f)
    rem[1:] = f[1:] - np.stack([phi(x[1:]) for phi, _ in _SING_BASIS], axis=1) @ coef
    return exact + _composite(x, rem)


def energy_identity_terms(sol: ModeSolution, k2, p, rhs, variant="neumann", a_top=0.0):
    x = sol.x
    v, dv, d2v = sol.v, sol.dv, sol.d2v
    h = np.asarray(rhs, dtype=complex) * np.ones_like(x)
    q = lambda f: singular_quad(x, f)
    with np.errstate(divide="ignore", invalid="ignore"):
        if variant == "neumann":
            lhs = (-q(np.abs(d2v) ** 2) - abs(d2v[-1]) ** 2 + 2 * np.real(a_top * np.conj(dv[-1]))
                   - 2 * k2 * q(np.abs(dv) ** 2) - k2 * k2 * q(np.abs(v) ** 2)
                   + 2 * np.real(p * q(v * np.conj(dv) / x)))
            rhs_ = 2 * np.real(q(h * np.conj(dv) / x))
        elif variant == "dirichlet":
            lhs = (q(x * np.abs(d2v) ** 2) + p * q(np.abs(v) ** 2 / x)
                   + 2 * k2 * q(x * np.abs(dv) ** 2) + k2 * k2 * q(x * np.abs(v) ** 2))
            rhs_ = q(h * np.conj(v) / x)
        else:
            raise ValueError("variant is 'neumann' or 'dirichlet'")
    return lhs, rhs_


def energy_identity_residual(sol: ModeSolution, k2, p, rhs, variant="neumann", a_top=0.0) -> float:
    """Relative mismatch of the integrated-by-parts energy identity."""
    lhs, rhs_ = energy_identity_terms(sol, k2, p, rhs, variant, a_top)
    return float(abs(lhs - rhs_) / (abs(lhs) + abs(rhs_) + np.finfo(float).eps))


# Frozen Hardy bounds.  Cauchy-Schwarz on int |v|^2 = |v(1)|^2 - 2 Re int x v' conj(v)
# gives 4; applying that to v' together with |v'(1)|^2 <= int x |v''|^2 gives 8.
HARDY_BOUND_TRACE = 4.0
HARDY_BOUND_DIRICHLET = 8.0


@dataclass(frozen=True)
class HardyResult:
    constant_trace: float
    constant_dirichlet: float | None
    passed: bool


def hardy_check(x, v, dv=None, d2v=None, top_value=None) -> HardyResult:
    """Empirical constants of

        int |v|^2 <= C (|v(1)|^2 + int x^2 |v'|^2)
        int |v'|^2 <= C int x |v''|^2       (when v(0) = v(1) = 0)

    from nodal samples; derivatives default to nodal stencils.
    """
    from .mesh import derivative_matrix

    x = x.nodes if isinstance(x, Mesh1D) else np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=complex)
    if dv is None:
        dv = derivative_matrix(x, 1) @ v
    top = v[-1] if top_value is None else top_value
    lhs1 = _trap(np.abs(v) ** 2, x)
    rhs1 = abs(top) ** 2 + _trap(x * x * np.abs(dv) ** 2, x)
    c1 = float(lhs1 / rhs1) if rhs1 > 0 else (0.0 if lhs1 == 0 else math.inf)
    c2 = None
    vmax = float(np.max(np.abs(v)))
    if abs(v[0]) <= 1e-12 * vmax and abs(v[-1]) <= 1e-12 * vmax:
        if d2v is None:
            d2v = derivative_matrix(x, 2) @ v
        lhs2 = _trap(np.abs(dv) ** 2, x)
        rhs2 = _trap(x * np.abs(d2v) ** 2, x)
        c2 = float(lhs2 / rhs2) if rhs2 > 0 else (0.0 if lhs2 == 0 else math.inf)
    ok = c1 <= HARDY_BOUND_TRACE and (c2 is None or c2 <= HARDY_BOUND_DIRICHLET)
    return HardyResult(c1, c2, ok)


def _trap(f, x):
    return float(np.real(_composite(x, f)))
