"""Nonlinear layer: background pair, residual F = (F1, F2), its derivative
and the chord Newton iteration in the fixed collar domain.

Unknowns are corrections (u, delta) to a background (w, sigma):
h = w + u on the grid, rho = sigma + delta on the contact boundary.  Time
levels n = 0..S with implicit Euler; level 0 is fixed by the data.

Per slab n >= 1 the discrete residual has the layout of the linear slab
operators (wall-normal node index j):

* j = 0        h(omega, 0)                              (film edge)
* 1 <= j < M-1 (h^n - h^{n-1})/dt - h_lam/(1 + rho_lam) (rho^n - rho^{n-1})/dt
               + div_rho(h^2 grad_rho lap_rho h) - forcing
* j = M-1      n . grad lap h - top flux datum
* j = M        h - top height datum

and the boundary row F2 = -h_lam K(rho) - g(e_rho), K the contact factor.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import sympy as sp

from .errors import BallExitError, ConfigError, DegeneracyError, InfeasibleBackground, SolverError
from .geometry import (BoundaryField, CollarMap, DomainSpec, check_amplitude, contact_angle_factor,
                       divergence_form, extend_boundary_function, extension_jet, field_jet, map_jets)
from .grid import CollarGrid, make_grid
from .linear import CoupledSystem, LinearCoefficients, solve_coupled_system
from .mesh import FieldSeries, ScalarField
from .mms import ExactField
from .nodal import _normal

TOP = "clamped"
STEP = 1e-30  # complex step


# ---------------------------------------------------------------- builtins

def collar_symbols(grid: CollarGrid):
    om = tuple(sp.Symbol(f"omega{i + 1}", real=True) for i in range(len(grid.tangential)))
    return om, sp.Symbol("lambda", real=True), sp.Symbol("t", real=True)


AMP_STRIP = sp.Rational(1, 2)
AMP_DISK = sp.Rational(3, 10)


def builtin_h0_expr(name: str, grid: CollarGrid):
    """Sympy expression of a builtin initial height in collar coordinates.

    All builtins vanish on the contact boundary with unit inward slope and
    have zero wall-normal derivative of lap h0 at the top, so the top mass
    flux is zero.  Perturbations carry an eighth power of the distance to
    the top, which keeps the initial rate and its flux zero there.
    """
    om, lam, _ = collar_symbols(grid)
    wob = 1 + sp.Rational(1, 2) * sp.cos(om[0]) if om else 1
    if grid.kind == "strip":
        if name == "wedge":
            return lam
        if name == "wedge_perturbed":
            return lam + AMP_STRIP * lam**2 * (1 - lam) ** 8 * wob
    else:
        if name == "cap":
            return lam - lam**2 / 2
        if name == "cap_perturbed":
            return lam - lam**2 / 2 + AMP_DISK * lam**2 * (1 - 2 * lam) ** 8 * wob
    raise ConfigError(f"unknown builtin h0 '{name}' for the {grid.kind} domain")


def builtin_h0(name: str, grid: CollarGrid, slope: float = 0.1) -> np.ndarray:
    """Builtin initial height scaled to contact slope ``slope``.  Scaling h
    by s slows the dynamics by s^2, which sets the length of a short time
    interval."""
    om, lam, t = collar_symbols(grid)
    return slope * ExactField(builtin_h0_expr(name, grid) + 0 * t, om + (lam,), t).values(grid, 0.0)


def constant_g(value: float):
    def g(y, t):
        return np.full(np.shape(y)[:-1], float(value))

    g.description = f"const:{value}"
    return g


def g_from_boundary(bf: BoundaryField):
    """Boundary samples extended constantly along the normal (the value at a
    front point is the sample at its tangential node)."""

    def g(y, t, _bf=bf):
        i = int(round((t - _bf.t0) / _bf.dt)) if _bf.nslabs > 1 else 0
        i = min(max(i, 0), _bf.nslabs - 1)
        return np.asarray(_bf.values[i])

    g.description = "csv (constant along the normal)"
    g.nodal = True
    return g


# ---------------------------------------------------------------- data types

@dataclass(eq=False)
class ProblemData:
    grid: CollarGrid
    h0: np.ndarray
    g: Callable
    domain: DomainSpec
    gamma: float = 0.5
    T: float = 0.1
    nslabs: int = 4
    forcing: Callable | None = None
    top_data: Callable | None = None
    nu: float | None = None
    compat_tol: float = 1e-6
    clamp: float | None = None  # time scale of the background clamp; default 4 T

    def __post_init__(self):
        self.h0 = np.asarray(getattr(self.h0, "values", self.h0), dtype=float)
        if self.h0.shape != self.grid.shape:
            raise ConfigError("h0 does not match the grid")
        if not 0 < self.gamma < 1:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.T <= 0 or self.nslabs < 1:
            raise ConfigError("T must be positive and nslabs >= 1")
        scale = max(1.0, float(np.max(np.abs(self.h0))))
        if np.max(np.abs(self.h0[..., 0])) > 1e-10 * scale:
            raise DegeneracyError("h0 must vanish on the contact boundary")
        if np.min(self.h0[..., 1:]) <= 0:
            raise DegeneracyError("h0 must be positive inside the domain")
        slope = self.slope0()
        if self.nu is None:
            self.nu = float(np.min(slope))
        if np.min(slope) < self.nu or self.nu <= 0:
            raise DegeneracyError(f"inward slope of h0 {np.min(slope):.3g} is below nu")
        g0 = self.g_values(np.zeros(self.grid.tshape), 0.0)
        if np.max(np.real(g0)) >= 0:
            raise DegeneracyError("the contact datum g must be negative")
        mismatch = float(np.max(np.abs(-slope - np.real(g0))))
        self.compat_mismatch = mismatch
        if mismatch > self.compat_tol:
            warnings.warn(f"contact datum incompatible with h0 at t = 0: mismatch {mismatch:.3g}", RuntimeWarning)

    @property
    def dt(self):
        return self.T / self.nslabs

    def slope0(self):
        return self.grid.normal_derivative(self.h0, 1)[..., 0]

    def front_points(self, rho_b) -> np.ndarray:
        """Physical front positions for a boundary deviation (complex allowed)."""
        g = self.grid
        rho_b = np.asarray(rho_b)
        if g.kind == "strip":
            om = [np.broadcast_to(c[..., 0], g.tshape) for c in g.coords()[:-1]]
            return np.stack(om + [rho_b], axis=-1) if om else np.asarray(rho_b)[..., None]
        th = g.coords()[0][..., 0]
        r = 1.0 - rho_b
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def g_values(self, rho_b, t):
        if getattr(self.g, "nodal", False):
            return self.g(None, t)
        return self.g(self.front_points(rho_b), t)

    def top(self, t):
        """(height, flux) data on the top boundary."""
        if self.top_data is not None:
            return self.top_data(t)
        if not hasattr(self, "_top0"):
            M = self.grid.normal.size - 1
            hj = field_jet(self.grid, self.h0)
            E = map_jets(self.grid, extension_jet(self.grid, np.zeros(self.grid.tshape), self.domain.collar_width)).E
            parts = divergence_form(hj, None, E)
            nvec, _ = _normal(E, self.grid.ndim)
            flux = sum(nvec[i] * parts.flux_grad[i].value for i in range(self.grid.ndim))
            self._top0 = (self.h0[..., M].copy(), np.broadcast_to(flux, self.grid.shape)[..., M].copy())
        return self._top0


@dataclass
class StatePair:
    u: np.ndarray
    delta: np.ndarray

    @classmethod
    def zeros(cls, grid: CollarGrid, nslabs: int, dtype=float):
        return cls(np.zeros((nslabs + 1,) + grid.shape, dtype), np.zeros((nslabs + 1,) + grid.tshape, dtype))

    def __add__(self, o):
        return StatePair(self.u + o.u, self.delta + o.delta)

    def __sub__(self, o):
        return StatePair(self.u - o.u, self.delta - o.delta)

    def scale(self, a):
        return StatePair(a * self.u, a * self.delta)

    def norm(self) -> float:
        return max(float(np.max(np.abs(self.u))), float(np.max(np.abs(self.delta))))


@dataclass(eq=False)
class Background:
    grid: CollarGrid
    T: float
    nslabs: int
    w: np.ndarray
    sigma: np.ndarray
    rho1: np.ndarray
    h1: np.ndarray
    tau: float
    margins: dict = field(default_factory=dict)
    bisections: list = field(default_factory=list)

    @property
    def dt(self):
        return self.T / self.nslabs

    def times(self):
        return self.dt * np.arange(self.nslabs + 1)

    def w_series(self) -> FieldSeries:
        return FieldSeries.from_array(self.grid.axes, self.w, self.dt)

    def sigma_field(self) -> BoundaryField:
        return BoundaryField(self.grid.tangential, self.sigma, self.dt)


@dataclass
class NewtonState:
    psi: StatePair
    residual_norm: float
    iterate_index: int
    history: list = field(default_factory=list)
    picard_factors: list = field(default_factory=list)
    converged: bool = False
    flag: str = ""


# ---------------------------------------------------------------- initial rates

def _flat_E(grid, gamma0):
    return map_jets(grid, extension_jet(grid, np.zeros(grid.tshape), gamma0)).E


def thin_film_operator(grid: CollarGrid, h: np.ndarray, gamma0: float) -> np.ndarray:
    """div(h^2 grad lap h) in the fixed metric.  The h^2 factor is applied to
    the jet of grad lap h before the outer derivative, so the product stays
    regular at the wall."""
    parts = divergence_form(field_jet(grid, h), None, _flat_E(grid, gamma0))
    return np.broadcast_to(parts.div.value, grid.shape)


def compute_rho1(h0: np.ndarray, grid: CollarGrid, gamma0: float = 0.5, nu: float = 0.0,
                 forcing0: np.ndarray | None = None) -> np.ndarray:
    """Initial front speed: (div(h0^2 grad lap h0) - f) / (inward slope) on
    the wall, f the forcing at t = 0 (zero by default)."""
    h0 = np.asarray(getattr(h0, "values", h0), dtype=float)
    slope = grid.normal_derivative(h0, 1)[..., 0]
    if np.min(slope) <= max(nu, 0.0):
        raise DegeneracyError(f"inward slope {np.min(slope):.3g} too small for the front speed")
    src = thin_film_operator(grid, h0, gamma0)
    if forcing0 is not None:
        src = src - forcing0
    return src[..., 0] / slope


def compute_h1(h0: np.ndarray, rho1: np.ndarray, grid: CollarGrid, gamma0: float = 0.5,
               forcing0: np.ndarray | None = None) -> np.ndarray:
    """Initial rate dh/dt = h0_lam * E rho1 - div(h0^2 grad lap h0) + f."""
    h0 = np.asarray(getattr(h0, "values", h0), dtype=float)
    ext = extend_boundary_function(rho1, grid, gamma0, check=False)
    out = grid.normal_derivative(h0, 1) * ext - thin_film_operator(grid, h0, gamma0)
    return out if forcing0 is None else out + forcing0


def eta(t, tau):
    """Smooth clamp with eta(0) = 1, eta'(0) = 0."""
    return np.exp(-((np.asarray(t) / tau) ** 2))


def build_background(data: ProblemData, T_floor: float = 1e-4) -> Background:
    """w = h0 + t h1 eta(t), sigma = t rho1 eta(t); T is halved until w stays
    positive with inward slope >= nu/2 on every level."""
    grid = data.grid
    g0 = data.domain.collar_width
    f0 = None if data.forcing is None else np.asarray(data.forcing(0.0))
    rho1 = compute_rho1(data.h0, grid, g0, forcing0=f0)
    h1 = compute_h1(data.h0, rho1, grid, g0, forcing0=f0)
    tau = data.clamp if data.clamp is not None else 4.0 * data.T
    T = data.T
    trace = []
    while True:
        times = (T / data.nslabs) * np.arange(data.nslabs + 1)
        e = eta(times, tau)
        w = data.h0[None] + (times * e)[(...,) + (None,) * grid.ndim] * h1[None]
        w[..., 0] = 0.0
        sigma = (times * e)[(...,) + (None,) * len(grid.tshape)] * rho1[None]
        interior = float(np.min(w[:, ..., 1:]))
        slope = float(np.min(grid.normal_derivative(w, 1)[..., 0]))
        amp = float(np.max(np.abs(sigma)))
        ok = interior > 0 and slope >= data.nu / 2 and amp <= g0 / 4
        trace.append({"T": T, "min_w": interior, "min_slope": slope, "sigma_amp": amp, "ok": ok})
        if ok:
            margins = {"min_w": interior, "min_slope": slope, "slope_bound": data.nu / 2, "sigma_amp": amp}
            return Background(grid, T, data.nslabs, w, sigma, rho1, h1, tau, margins, trace)
        T /= 2
        if T < T_floor:
            raise InfeasibleBackground(f"background checks fail down to T = {2 * T:.3g}: {trace[-1]}")


# ---------------------------------------------------------------- residual

class Residual:
    """Slab residuals for fixed data and background."""

    def __init__(self, data: ProblemData, bg: Background):
        self.data = data
        self.bg = bg
        self.grid = data.grid
        self.g0 = data.domain.collar_width
        self.M = self.grid.normal.size - 1
        self.times = bg.times()

    def slab(self, n, h, hp, rho, rhop, check=True):
        grid, M, dt = self.grid, self.M, self.bg.dt
        if check:
            _ball_check(grid, rho, self.g0)
        rj = extension_jet(grid, rho, self.g0)
        mj = map_jets(grid, rj)
        hj = field_jet(grid, h)
        parts = divergence_form(hj, None, mj.E)
        nd = grid.ndim
        hl = hj.d(nd - 1).value
        rl = rj.d(nd - 1).value
        rho_t = extend_boundary_function(rho - rhop, grid, self.g0, check=False) / dt
        F1 = (h - hp) / dt - hl / (1.0 + rl) * rho_t + parts.div.value
        F1 = np.array(np.broadcast_to(F1, grid.shape))
        t = self.times[n]
        if self.data.forcing is not None:
            F1 = F1 - self.data.forcing(t)
        nvec, _ = _normal(mj.E, nd)
        flux = np.broadcast_to(sum(nvec[i] * parts.flux_grad[i].value for i in range(nd)), grid.shape)
        top_h, top_f = self.data.top(t)
        F1[..., 0] = h[..., 0]
        F1[..., M - 1] = flux[..., M] - top_f
        F1[..., M] = h[..., M] - top_h
        K = contact_angle_factor(rho, grid)
        F2 = -np.broadcast_to(hl, grid.shape)[..., 0] * K - self.data.g_values(rho, t)
        return F1, F2

    def full(self, psi: StatePair):
        bg = self.bg
        S = bg.nslabs
        dtype = np.result_type(psi.u, psi.delta, float)
        R1 = np.zeros((S + 1,) + self.grid.shape, dtype)
        R2 = np.zeros((S + 1,) + self.grid.tshape, dtype)
        for n in range(1, S + 1):
            R1[n], R2[n] = self.slab(n, bg.w[n] + psi.u[n], bg.w[n - 1] + psi.u[n - 1],
                                     bg.sigma[n] + psi.delta[n], bg.sigma[n - 1] + psi.delta[n - 1],
                                     check=not np.iscomplexobj(psi.u))
        return R1, R2


def _ball_check(grid, rho, g0):
    amp = float(np.max(np.abs(rho))) if np.size(rho) else 0.0
    if amp > g0 / 2:
        raise BallExitError(f"front deviation {amp:.3g} leaves the admissible ball (gamma0/2 = {g0 / 2:.3g})")
    from .geometry import cutoff

    rl = np.real(rho)[..., None] * cutoff(grid.lam / g0, 1) / g0
    if np.min(1.0 + rl) < 0.5:
        raise BallExitError(f"1 + rho_lambda = {np.min(1.0 + rl):.3g} < 1/2")


def residual_F(psi: StatePair, bg: Background, data: ProblemData):
    """(F1, F2) with level 0 left at zero."""
    return Residual(data, bg).full(psi)


def residual_norm(R1, R2) -> float:
    return max(float(np.max(np.abs(R1))), float(np.max(np.abs(R2))))


# ---------------------------------------------------------------- derivative

def frechet_apply(direction: StatePair, bg: Background, data: ProblemData, at: StatePair | None = None):
    """F'(at)[direction] by a complex step through the residual pipeline."""
    res = Residual(data, bg)
    base = at if at is not None else StatePair.zeros(data.grid, bg.nslabs)
    probe = StatePair(base.u + 1j * STEP * direction.u, base.delta + 1j * STEP * direction.delta)
    R1, R2 = res.full(probe)
    return R1.imag / STEP, R2.imag / STEP


def boundary_coefficients(bg: Background, data: ProblemData, n: int) -> dict:
    """Coefficients a1..a4 of the linearized contact-angle row at level n,
    with the collar derivative standing for the inward normal derivative.
    a2 multiplies delta_lambda, which vanishes on the wall for the cutoff
    extension."""
    grid = data.grid
    sig = bg.sigma[n]
    wl = grid.normal_derivative(bg.w[n], 1)[..., 0]
    K = contact_angle_factor(sig, grid)
    nt = len(grid.tangential)
    if grid.kind == "disk":
        m = 1.0 / (1.0 - sig) ** 2
        dm = 2.0 / (1.0 - sig) ** 3
    else:
        m = np.ones_like(sig)
        dm = np.zeros_like(sig)
    a3 = []
    quad = 0.0
    for i in range(nt):
        e = [0] * nt
        e[i] = 1
        si = grid.boundary_derivative(sig, tuple(e))
        a3.append(0.5 * wl / K * 2.0 * m * si)
        quad = quad + dm * si * si
    t = bg.times()[n]
    eps = STEP
    gpert = np.imag(data.g_values(sig + 1j * eps, t)) / eps
    # the map moves points along the inward normal as rho grows
    a4 = 0.5 * wl / K * quad + gpert
    return {"a1": K, "a2": wl * K, "a3": a3, "a4": a4, "g_shift": gpert}


def boundary_row_from_coefficients(coef: dict, grid: CollarGrid, u, delta):
    """Linearized F2 from the coefficients (sign convention of F2)."""
    ul = grid.normal_derivative(u, 1)[..., 0]
    nt = len(grid.tangential)
    acc = -coef["a1"] * ul
    for i in range(nt):
        e = [0] * nt
        e[i] = 1
        acc = acc - coef["a3"][i] * grid.boundary_derivative(delta, tuple(e))
    return acc - coef["a4"] * delta


def random_direction(grid: CollarGrid, nslabs: int, seed: int, modes: int = 3) -> StatePair:
    """Smooth seeded direction: a few tangential modes times polynomial
    wall-normal profiles, zero at level 0."""
    rng = np.random.default_rng(seed)
    d = StatePair.zeros(grid, nslabs)
    lam = grid.lam / grid.lam[-1]
    coords = grid.coords()[:-1]
    for n in range(1, nslabs + 1):
        tang_u = np.ones(grid.tshape)
        tang_d = np.ones(grid.tshape)
        for c in coords:
            c0 = c[..., 0]
            tang_u = tang_u * sum(rng.normal() * np.cos(k * c0 + rng.uniform(0, 2 * np.pi)) for k in range(modes))
            tang_d = tang_d * sum(rng.normal() * np.cos(k * c0 + rng.uniform(0, 2 * np.pi)) for k in range(modes))
        prof = sum(rng.normal() * lam**p for p in range(1, 5))
        d.u[n] = tang_u[..., None] * prof
        d.delta[n] = np.broadcast_to(tang_d, grid.tshape)
    return d


def frechet_fd_check(data: ProblemData, bg: Background, seed: int = 0, eps_list=None, scale: float = 1e-3) -> dict:
    """Relative error between a central difference of F and the complex-step
    derivative, at the best step from ``eps_list``."""
    eps_list = eps_list if eps_list is not None else [10.0**-k for k in range(2, 9)]
    res = Residual(data, bg)
    zero = StatePair.zeros(data.grid, bg.nslabs)
    d = random_direction(data.grid, bg.nslabs, seed).scale(scale / max(random_direction(data.grid, bg.nslabs, seed).norm(), 1e-300))
    J1, J2 = frechet_apply(d, bg, data)
    ref = np.concatenate([J1.ravel(), J2.ravel()])
    errs = {}
    for eps in eps_list:
        p1, p2 = res.full(zero + d.scale(eps))
        m1, m2 = res.full(zero - d.scale(eps))
        fd = np.concatenate([((p1 - m1) / (2 * eps)).ravel(), ((p2 - m2) / (2 * eps)).ravel()])
        errs[eps] = float(np.linalg.norm(fd - ref) / np.linalg.norm(ref))
    best = min(errs, key=errs.get)
    return {"errors": errs, "best_eps": best, "best_error": errs[best]}


class NewtonSystem(CoupledSystem):
    """Coupled slab system whose exact operator is F'(at) (complex step);
    the principal part comes from the background coefficients."""

    def __init__(self, coeffs: LinearCoefficients, res: Residual, at: StatePair | None = None):
        super().__init__(coeffs, None)
        self.res = res
        self.at = at

    def exact(self, n, u, delta, u_prev, delta_prev):
        bg = self.res.bg
        bu = bg.w[n] + (0 if self.at is None else self.at.u[n])
        bup = bg.w[n - 1] + (0 if self.at is None else self.at.u[n - 1])
        bd = bg.sigma[n] + (0 if self.at is None else self.at.delta[n])
        bdp = bg.sigma[n - 1] + (0 if self.at is None else self.at.delta[n - 1])
        i = 1j * STEP
        F1, F2 = self.res.slab(n, bu + i * u, bup + i * u_prev, bd + i * delta, bdp + i * delta_prev, check=False)
        return F1.imag / STEP, -F2.imag / STEP


class SlabJacobian:
    """Dense block of F' for one slab with respect to its own level,
    assembled from complex-step columns and LU-factored once.

    The wall-normal stencils reach ``halo`` nodes, so nodes of one
    tangential index that are 2*halo+1 apart share a probe; every delta
    entry gets its own probe.  The coupling to the previous level is
    applied matrix-free."""

    def __init__(self, res: Residual, n: int, at: StatePair | None = None, halo: int | None = None):
        import scipy.linalg as sl

        self.res, self.n = res, n
        bg, grid = res.bg, res.grid
        self.base = bg.w[n] + (0 if at is None else at.u[n])
        self.base_prev = bg.w[n - 1] + (0 if at is None else at.u[n - 1])
        self.dbase = bg.sigma[n] + (0 if at is None else at.delta[n])
        self.dbase_prev = bg.sigma[n - 1] + (0 if at is None else at.delta[n - 1])
        if halo is None:
            halo = max(_bandwidth(grid.normal_matrix(k)) for k in range(1, 5))
        period = 2 * halo + 1
        nt = int(np.prod(grid.tshape)) if grid.tshape else 1
        L = grid.normal.size
        nu = nt * L
        A = np.zeros((nu + nt, nu + nt))
        jj = np.arange(L)
        for i in range(nt):
            for c in range(min(period, L)):
                du = np.zeros((nt, L))
                cols = jj[c::period]
                du[i, cols] = 1.0
                r1, r2 = self._probe(du.reshape(grid.shape), np.zeros(grid.tshape))
                rows = np.concatenate([r1.reshape(nt, L), r2.reshape(nt, 1)], axis=1)
                # each row j hears the unique probed node within the halo
                owner = cols[np.clip(np.rint((jj - c) / period).astype(int), 0, len(cols) - 1)]
                near = np.abs(owner - jj) <= halo
                for ip in range(nt):
                    tgt = ip * L + jj[near]
                    A[tgt, i * L + owner[near]] = rows[ip, :L][near]
                    # F2 row depends on wall nodes only
                    k = cols[cols <= halo]
                    if k.size:
                        A[nu + ip, i * L + k[0]] = rows[ip, L]
            dd = np.zeros(nt)
            dd[i] = 1.0
            r1, r2 = self._probe(np.zeros(grid.shape), dd.reshape(grid.tshape))
            A[:nu, nu + i] = r1.ravel()
            A[nu:, nu + i] = np.ravel(r2)
        self.scale = 1.0 / np.maximum(np.max(np.abs(A), axis=1), 1e-300)
        self.matrix = A
        self.lu = sl.lu_factor(A * self.scale[:, None])
        self.nu, self.nt = nu, nt

    def _probe(self, du, dd, prev=False):
        i = 1j * STEP
        if prev:
            F1, F2 = self.res.slab(self.n, self.base + 0j, self.base_prev + i * du, self.dbase + 0j,
                                   self.dbase_prev + i * dd, check=False)
        else:
            F1, F2 = self.res.slab(self.n, self.base + i * du, self.base_prev + 0j, self.dbase + i * dd,
                                   self.dbase_prev + 0j, check=False)
        return F1.imag / STEP, np.asarray(F2).imag / STEP

    def solve(self, r1, r2, u_prev=None, d_prev=None):
        import scipy.linalg as sl

        grid = self.res.grid
        b = np.concatenate([np.ravel(r1), np.ravel(r2)])
        if u_prev is not None and (np.any(u_prev) or np.any(d_prev)):
            p1, p2 = self._probe(u_prev, d_prev, prev=True)
            b = b - np.concatenate([p1.ravel(), np.ravel(p2)])
        x = sl.lu_solve(self.lu, b * self.scale)
        return x[: self.nu].reshape(grid.shape), x[self.nu :].reshape(grid.tshape)


def _bandwidth(D) -> int:
    D = D.toarray() if hasattr(D, "toarray") else np.asarray(D)
    i, j = np.nonzero(D)
    return int(np.max(np.abs(i - j))) if i.size else 0


def direct_step(blocks: list, R1, R2, grid: CollarGrid) -> StatePair:
    """Solve F'(at) x = F slab by slab with the factored blocks."""
    x = StatePair.zeros(grid, len(blocks))
    for n, blk in enumerate(blocks, start=1):
        x.u[n], x.delta[n] = blk.solve(R1[n], R2[n], x.u[n - 1], x.delta[n - 1])
    return x


# ---------------------------------------------------------------- Newton

@dataclass
class NewtonOptions:
    tol: float = 1e-8
    max_iter: int = 20
    picard_tol: float = 1e-8
    max_picard: int = 30
    method: str = "direct"
    relinearize: bool = False


def chord_newton_solve(data: ProblemData, tol: float = 1e-8, max_iter: int = 20, options: NewtonOptions | None = None,
                       background: Background | None = None):
    """Chord iteration psi <- psi - F'(0)^{-1} F(psi).

    Returns (h series, rho boundary field, NewtonState).  On divergence
    (two consecutive residual increases) or when max_iter is reached the
    best iterate is returned with ``flag`` set.
    """
    opts = options or NewtonOptions(tol=tol, max_iter=max_iter)
    bg = background or build_background(data)
    res = Residual(data, bg)
    coeffs = LinearCoefficients(data.grid, bg.dt, bg.w, bg.sigma, data.domain.collar_width, top=TOP)
    psi = StatePair.zeros(data.grid, bg.nslabs)
    R1, R2 = res.full(psi)
    rn = residual_norm(R1, R2)
    state = NewtonState(psi, rn, 0, [rn])
    best = (rn, psi)
    system = NewtonSystem(coeffs, res)
    blocks = [SlabJacobian(res, n) for n in range(1, bg.nslabs + 1)] if opts.method == "direct" else None
    rises = 0
    for k in range(1, opts.max_iter + 1):
        if rn <= opts.tol:
            state.converged = True
            break
        if opts.relinearize:
            system = NewtonSystem(coeffs, res, psi)
            if blocks is not None:
                blocks = [SlabJacobian(res, n, psi) for n in range(1, bg.nslabs + 1)]
        if blocks is not None:
            step = direct_step(blocks, R1, R2, data.grid)
        else:
            sol = solve_coupled_system(system, R1, -R2, opts.picard_tol, opts.max_picard, opts.method)
            state.picard_factors.append(sol.contraction_factor)
            step = StatePair(sol.u.array(), sol.delta.values)
        try:
            psi = psi - step
            R1, R2 = res.full(psi)
        except BallExitError as exc:
            state.flag = f"ball exit: {exc}"
            break
        new = residual_norm(R1, R2)
        rises = rises + 1 if new > rn else 0
        rn = new
        state.history.append(rn)
        state.iterate_index = k
        if rn < best[0]:
            best = (rn, psi)
        if rises >= 2:
            state.flag = "divergence"
            break
    else:
        if rn <= opts.tol:
            state.converged = True
        else:
            state.flag = "max_iter"
    if rn <= opts.tol:
        state.converged = True
    state.residual_norm, state.psi = best
    h = FieldSeries.from_array(data.grid.axes, bg.w + state.psi.u, bg.dt)
    rho = BoundaryField(data.grid.tangential, bg.sigma + state.psi.delta, bg.dt)
    state.background = bg
    return h, rho, state


# ---------------------------------------------------------------- physical space

@dataclass
class PhysicalTrajectory:
    kind: str
    times: np.ndarray
    lattice: tuple
    h: np.ndarray
    front: np.ndarray
    node_positions: np.ndarray
    node_values: np.ndarray


def mapped_normal_coordinate(grid: CollarGrid, rho_b, gamma0: float) -> np.ndarray:
    """Physical wall-normal coordinate of every node: y_N on the strip, r on the disk."""
    lam_y = grid.coords()[-1] + extend_boundary_function(rho_b, grid, gamma0, check=False)
    return lam_y if grid.kind == "strip" else 1.0 - lam_y


def reconstruct_physical(h: FieldSeries, rho: BoundaryField, grid: CollarGrid, domain: DomainSpec,
                         lattice: np.ndarray | None = None) -> PhysicalTrajectory:
    """Sample h on a fixed lattice of physical wall-normal positions along
    each tangential line.  Lattice points outside the film are NaN."""
    g0 = domain.collar_width
    default = grid.lam if grid.kind == "strip" else 1.0 - grid.lam
    lat = np.asarray(default if lattice is None else lattice, dtype=float)
    H = h.array()
    out, fronts, pos = [], [], []
    for n in range(H.shape[0]):
        check_amplitude(rho.values[n], g0)
        y = np.broadcast_to(mapped_normal_coordinate(grid, rho.values[n], g0), grid.shape)
        pos.append(y)
        vals = np.full(grid.tshape + (lat.size,), np.nan)
        for idx in np.ndindex(*grid.tshape):
            yy, hh = y[idx], H[n][idx]
            order = np.argsort(yy)
            yy, hh = yy[order], hh[order]
            inside = (lat >= yy[0] - 1e-14) & (lat <= yy[-1] + 1e-14)
            vals[idx][inside] = np.interp(lat[inside], yy, hh)
        out.append(vals)
        fronts.append(rho.values[n] if grid.kind == "strip" else 1.0 - rho.values[n])
    return PhysicalTrajectory(grid.kind, h.times(), tuple(a.coordinates() for a in grid.tangential) + (lat,),
                              np.array(out), np.array(fronts), np.array(pos), H)


def diagnostics(traj: PhysicalTrajectory, grid: CollarGrid, data: ProblemData | None = None,
                rho: BoundaryField | None = None) -> dict:
    """Mass per level, contact-angle error and interior positivity.

    The mass integrates h over the physical extent of every tangential line
    (trapezoid on the mapped nodes, so the first cell starts at the front)."""
    masses = []
    for n in range(traj.node_values.shape[0]):
        y = traj.node_positions[n]
        hv = traj.node_values[n]
        if traj.kind == "strip":
            col = -np.trapezoid(hv, y, axis=-1) if np.all(np.diff(y, axis=-1) < 0) else np.trapezoid(hv, y, axis=-1)
        else:
            col = np.abs(np.trapezoid(hv * y, y, axis=-1))
        for ax in reversed(grid.tangential):
            col = col.sum(axis=-1) * ax.spacing
        masses.append(float(col))
    masses = np.array(masses)
    drift = float(np.max(np.abs(masses - masses[0])) / abs(masses[0])) if masses[0] else 0.0
    pos_min = [float(np.min(traj.node_values[n][..., 1:-1])) for n in range(traj.node_values.shape[0])]
    rep = {"mass": masses.tolist(), "mass_drift": drift, "positivity_min": pos_min,
           "positivity_ok": bool(min(pos_min) > 0)}
    if data is not None and rho is not None:
        errs = []
        for n, t in enumerate(traj.times):
            hl = grid.normal_derivative(traj.node_values[n], 1)[..., 0]
            K = contact_angle_factor(rho.values[n], grid)
            errs.append(float(np.max(np.abs(-hl * K - np.real(data.g_values(rho.values[n], t))))))
        # level 0 is data, not an unknown
        rep["angle_error"] = max(errs[1:]) if len(errs) > 1 else errs[0]
        rep["angle_error_per_level"] = errs
    return rep


# ---------------------------------------------------------------- manufactured problem

@dataclass
class Manufactured:
    data: ProblemData
    h_exact: ExactField
    rho_exact: ExactField

    def psi_exact(self, bg: Background) -> StatePair:
        grid = self.data.grid
        t = bg.times()
        u = np.array([self.h_exact.values(grid, tt) for tt in t]) - bg.w
        d = np.array([self.rho_exact.values(grid, tt)[..., 0] for tt in t]) - bg.sigma
        return StatePair(u, d)


def manufactured_problem(grid: CollarGrid, T: float = 0.1, nslabs: int = 4, amp_h: float = 0.2,
                         amp_rho: float = 0.05, c_g: float = 0.5, h0_name: str = "wedge_perturbed",
                         slope: float = 0.1) -> Manufactured:
    """Strip problem with h* = h0 + t q and rho* = amp_rho t sin(omega):
    linear in time, so implicit Euler adds no time error and the forcing
    isolates the spatial discretization.  The contact datum is
    g(y, t) = G(y', t) + c_g (y_N - rho*(y', t)) with G matched on the front."""
    if grid.kind != "strip" or not grid.tangential:
        raise ConfigError("the manufactured problem lives on a strip with N >= 2")
    domain = DomainSpec("strip", grid.ndim)
    g0 = domain.collar_width
    om, lam, t = collar_symbols(grid)
    h0e = builtin_h0_expr(h0_name, grid)
    q = amp_h * sp.sin(sp.pi * lam / 2) * lam * (1 + sp.cos(om[0]) / 2)
    hs = slope * (h0e + t * q)
    rs = amp_rho * t * sp.sin(om[0]) + 0 * lam
    H = ExactField(hs, om + (lam,), t)
    R = ExactField(rs, om + (lam,), t)
    K = sp.sqrt(1 + sum(sp.diff(rs, o) ** 2 for o in om))
    G = -sp.diff(hs, lam).subs(lam, 0) * K
    Gf = sp.lambdify(om + (t,), G, "numpy")
    Rf = sp.lambdify(om + (t,), rs, "numpy")

    def g(y, tt):
        ys = [y[..., i] for i in range(len(om))]
        return Gf(*ys, tt) + c_g * (y[..., -1] - Rf(*ys, tt))

    g.description = "manufactured"
    M = grid.normal.size - 1

    def exact_parts(tt):
        rb = R.values(grid, tt)[..., 0]
        rj = extension_jet(grid, rb, g0)
        mj = map_jets(grid, rj)
        hj = H.jet(grid, tt, 4)
        parts = divergence_form(hj, None, mj.E)
        return rj, mj, hj, parts

    cache = {}

    def forcing(tt):
        key = ("f", float(tt))
        if key not in cache:
            rj, mj, hj, parts = exact_parts(tt)
            nd = grid.ndim
            hl = hj.d(nd - 1).value
            rl = rj.d(nd - 1).value
            rt = extend_boundary_function(R.values(grid, tt, sp.diff(rs, t))[..., 0], grid, g0, check=False)
            cache[key] = np.broadcast_to(H.time_derivative(grid, tt) - hl / (1 + rl) * rt + parts.div.value, grid.shape)
        return cache[key]

    def top_data(tt):
        key = ("top", float(tt))
        if key not in cache:
            rj, mj, hj, parts = exact_parts(tt)
            nvec, _ = _normal(mj.E, grid.ndim)
            flux = np.broadcast_to(sum(nvec[i] * parts.flux_grad[i].value for i in range(grid.ndim)), grid.shape)
            cache[key] = (H.values(grid, tt)[..., M], flux[..., M].copy())
        return cache[key]

    h0 = H.values(grid, 0.0)
    data = ProblemData(grid, h0, g, domain, 0.5, T, nslabs, forcing, top_data)
    return Manufactured(data, H, R)


def make_problem(kind: str = "strip", N: int = 2, Nx: int = 16, M: int = 32, q: float = 2.0, T: float = 0.1,
                 nslabs: int = 4, h0: str = "wedge", g: float | Callable | None = None, gamma: float = 0.5,
                 slope: float = 0.1) -> ProblemData:
    grid = make_grid(kind, N, Nx, M, q)
    domain = DomainSpec(kind, N)
    g = -slope if g is None else g
    gfun = g if callable(g) else constant_g(g)
    return ProblemData(grid, builtin_h0(h0, grid, slope), gfun, domain, gamma, T, nslabs)
