"""Collar coordinates, the normal-shift map and pulled-back operators.

Conventions, pinned by tests:

* the collar coordinate ``lambda`` is the signed distance to the contact
  boundary, positive inside the film domain;
* the map moves a point along the inward normal,
  ``(omega, lambda) -> (omega, lambda + rho_ext(omega, lambda))``; on the
  disk a negative deviation therefore pushes the front outside the unit
  circle;
* the contact datum ``g`` is an outward normal derivative, hence
  ``-dh/dlambda * factor = g`` on the front.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .grid import CollarGrid, multi_indices
from .jets import Jet, algebra, coordinate_jet, trig_jet
from .mesh import PeriodicAxis, ScalarField


# ------------------------------------------------------------------ cutoff

def _smoothstep(n: int) -> np.polynomial.Polynomial:
    """Polynomial S of degree 2n+1 with S(0) = 0, S(1) = 1 and its first n
    derivatives vanishing at both ends."""
    c = [0.0] * (n + 1) + [math.comb(n + k, k) * math.comb(2 * n + 1, n - k) * (-1) ** k for k in range(n + 1)]
    return np.polynomial.Polynomial(c)


CUTOFF_SMOOTHNESS = 5
# chi = 1 - S(s) = S(1 - s); each half is evaluated from its own end to
# avoid cancellation in the power basis
_S = [_smoothstep(CUTOFF_SMOOTHNESS)]
for _ in range(2 * CUTOFF_SMOOTHNESS + 2):
    _S.append(_S[-1].deriv())


def cutoff(s, derivative: int = 0):
    """Cutoff chi: 1 at 0, 0 beyond 1, C^5 across both ends (degree 11)."""
    s = np.asarray(s)
    m = derivative
    if m < len(_S):
        low = (1.0 if m == 0 else 0.0) - _S[m](s)
        high = (-1) ** m * _S[m](1.0 - s)
        val = np.where(s < 0.5, low, high)
    else:
        val = np.zeros(np.shape(s))
    val = np.where(s >= 1.0, 0.0, val)
    return np.where(s <= 0.0, 1.0 if m == 0 else 0.0, val)


# ------------------------------------------------------------------ domains

@dataclass(frozen=True)
class DomainSpec:
    kind: str = "strip"
    N: int = 2
    gamma0: float | None = None
    inner_radius: float = 0.5

    def __post_init__(self):
        if self.kind == "strip" and self.N not in (1, 2, 3):
            raise ValueError("strip dimension must be 1, 2 or 3")
        if self.kind == "disk" and self.N != 2:
            raise ValueError("the disk is two-dimensional")
        if self.kind not in ("strip", "disk"):
            raise ValueError(f"unknown domain kind {self.kind}")
        g0 = self.collar_width
        if not 0.0 < g0 <= 0.5:
            raise ValueError(f"collar width {g0} outside (0, 1/2]")

    @property
    def collar_width(self) -> float:
        if self.gamma0 is not None:
            return float(self.gamma0)
        # Both collars stay inside the computational layer, so the extension
        # and all of its derivatives vanish at the top boundary.
        return 0.5 if self.kind == "strip" else 0.25


@dataclass(frozen=True)
class CollarMap:
    """Closed-form chart between physical points and (omega, lambda)."""

    domain: DomainSpec
    inward: bool = True

    @property
    def gamma0(self) -> float:
        return self.domain.collar_width

    def to_collar(self, x: np.ndarray):
        x = np.asarray(x, dtype=float)
        if self.domain.kind == "strip":
            return x[..., :-1], x[..., -1]
        r = np.hypot(x[..., 0], x[..., 1])
        return np.arctan2(x[..., 1], x[..., 0])[..., None], 1.0 - r

    def from_collar(self, omega, lam):
        omega = np.asarray(omega, dtype=float)
        lam = np.asarray(lam, dtype=float)
        if self.domain.kind == "strip":
            return np.concatenate([omega, lam[..., None]], axis=-1)
        th = omega[..., 0]
        r = 1.0 - lam
        return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)

    def inward_normal(self, omega):
        omega = np.asarray(omega, dtype=float)
        if self.domain.kind == "strip":
            n = np.zeros(omega.shape[:-1] + (omega.shape[-1] + 1,))
            n[..., -1] = 1.0
            return n
        th = omega[..., 0]
        return -np.stack([np.cos(th), np.sin(th)], axis=-1)


@dataclass(frozen=True, eq=False)
class BoundaryField:
    """Values over the tangential grid of the contact boundary and time slabs.

    ``values`` has shape (slabs, *tangential_shape).
    """

    axes: tuple
    values: np.ndarray
    dt: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        vals = np.asarray(self.values)
        shape = tuple(a.count for a in self.axes)
        if vals.shape[1:] != shape:
            vals = vals.reshape((-1,) + shape)
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "values", vals)

    @property
    def nslabs(self):
        return self.values.shape[0]

    def slab(self, i):
        return self.values[i]

    def times(self):
        return self.t0 + self.dt * np.arange(self.nslabs)


# ------------------------------------------------------------------ extension

def check_amplitude(rho_b, gamma0):
    amp = float(np.max(np.abs(rho_b))) if np.size(rho_b) else 0.0
    if amp > gamma0 / 2 + 1e-15:
        raise GeometryError(f"deviation amplitude {amp:.3g} exceeds gamma0/2 = {gamma0 / 2:.3g}")
    return amp


def extend_boundary_function(rho_b, grid: CollarGrid, gamma0: float, check: bool = True) -> np.ndarray:
    """Volume extension rho_b(omega) * chi(lambda / gamma0) on ``grid``.

    ``rho_b`` may carry leading slab axes; the result has shape
    ``rho_b.shape + (M+1,)``.
    """
    rho_b = np.asarray(rho_b)
    if check:
        check_amplitude(rho_b, gamma0)
    prof = cutoff(grid.lam / gamma0)
    return rho_b[..., None] * prof


def extension_jet(grid: CollarGrid, rho_b, gamma0: float, K: int = 4) -> Jet:
    """Exact jet of the extension: spectral in omega, analytic in lambda."""
    alg = algebra(grid.ndim)
    rho_b = np.asarray(rho_b)
    dtype = complex if np.iscomplexobj(rho_b) else float
    derivs = {}
    s = grid.lam / gamma0
    prof = {m: cutoff(s, m) / gamma0**m for m in range(K + 1)}
    nt = len(grid.tangential)
    tder = {}
    for a in multi_indices(grid.ndim, K):
        ta = a[:-1]
        if ta not in tder:
            tder[ta] = grid.boundary_derivative(rho_b, ta) if nt else rho_b
        derivs[a] = np.asarray(tder[ta])[..., None] * prof[a[-1]]
    return Jet.from_derivatives(alg, K, derivs, grid.shape, dtype)


def field_jet(grid: CollarGrid, u: np.ndarray, K: int = 4) -> Jet:
    alg = algebra(grid.ndim)
    dtype = complex if np.iscomplexobj(u) else float
    return Jet.from_derivatives(alg, K, grid.derivatives(u, K), grid.shape, dtype)


# ------------------------------------------------------------------ map jets

@dataclass
class MapJets:
    y: list
    J: list
    E: list
    det: Jet


def map_jets(grid: CollarGrid, rho_jet: Jet) -> MapJets:
    """Jets of the physical position, its Jacobian and the transition matrix
    E = J^{-T}, so that grad_y f = E grad_xi f."""
    alg = rho_jet.alg
    K = rho_jet.K
    n = grid.ndim
    coords = grid.coords()
    shape = grid.shape
    if grid.kind == "strip":
        y = [coordinate_jet(alg, K, i, coords[i], shape) for i in range(n - 1)]
        y.append(coordinate_jet(alg, K, n - 1, coords[-1], shape) + rho_jet)
    else:
        lam = coordinate_jet(alg, K, 1, coords[1], shape)
        R = 1.0 - lam - rho_jet
        y = [R * trig_jet(alg, K, 0, coords[0], shape, "cos"), R * trig_jet(alg, K, 0, coords[0], shape, "sin")]
    J = [[y[i].d(k) for k in range(n)] for i in range(n)]
    if n == 1:
        det = J[0][0]
        inv = [[det.reciprocal()]]
    elif n == 2:
        det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
        rdet = det.reciprocal()
        inv = [[J[1][1] * rdet, -J[0][1] * rdet], [-J[1][0] * rdet, J[0][0] * rdet]]
    else:
        cof = [[None] * 3 for _ in range(3)]
        for i in range(3):
            for j in range(3):
                r = [a for a in range(3) if a != i]
                c = [b for b in range(3) if b != j]
                m = J[r[0]][c[0]] * J[r[1]][c[1]] - J[r[0]][c[1]] * J[r[1]][c[0]]
                cof[i][j] = m if (i + j) % 2 == 0 else -m
        det = J[0][0] * cof[0][0] + J[0][1] * cof[0][1] + J[0][2] * cof[0][2]
        rdet = det.reciprocal()
        inv = [[cof[j][i] * rdet for j in range(3)] for i in range(3)]
    # E_ik = (J^{-1})_{ki}
    E = [[inv[k][i] for k in range(n)] for i in range(n)]
    return MapJets(y, J, E, det)


def grad_y(f: Jet, E) -> list:
    n = len(E)
    df = [f.d(k) for k in range(n)]
    out = []
    for i in range(n):
        acc = E[i][0] * df[0]
        for k in range(1, n):
            acc = acc + E[i][k] * df[k]
        out.append(acc)
    return out


@dataclass
class OperatorParts:
    lap: Jet
    flux_grad: list
    div: Jet


def divergence_form(h: Jet, coef: Jet | None, E) -> OperatorParts:
    """Pulled-back grad_y . (coef grad_y lap_y h).  ``coef=None`` means h^2."""
    g1 = grad_y(h, E)
    lap = None
    for i, gi in enumerate(g1):
        t = grad_y(gi, E)[i]
        lap = t if lap is None else lap + t
    G = grad_y(lap, E)
    c = h * h if coef is None else coef
    div = None
    for i, Gi in enumerate(G):
        t = grad_y(c * Gi, E)[i]
        div = t if div is None else div + t
    return OperatorParts(lap, G, div)


def normal_column(E, n):
    """Components of grad_y lambda (the last column of E), order 0 arrays."""
    return [E[i][n - 1].value for i in range(n)]


# ------------------------------------------------------------------ public ops

def transition_matrix(grid: CollarGrid, rho_b, gamma0: float) -> np.ndarray:
    """Nodewise E_rho as an array of shape (N, N, *grid.shape)."""
    mj = map_jets(grid, extension_jet(grid, rho_b, gamma0, K=1))
    n = grid.ndim
    return np.array([[np.broadcast_to(mj.E[i][k].value, grid.shape) for k in range(n)] for i in range(n)])


def check_diffeomorphism(grid: CollarGrid, rho_b, gamma0: float):
    prof = cutoff(grid.lam / gamma0, 1) / gamma0
    rlam = np.asarray(np.real(rho_b))[..., None] * prof
    if np.min(1.0 + rlam) <= 0:
        raise GeometryError("1 + d rho / d lambda <= 0: the map is not a diffeomorphism")
    return float(np.min(1.0 + rlam))


def nabla_rho(grid: CollarGrid, u: np.ndarray, rho_b, gamma0: float) -> np.ndarray:
    """Physical gradient of the pushed-forward field, expressed at fixed nodes.

    The disk returns Cartesian components.
    """
    check_amplitude(rho_b, gamma0)
    check_diffeomorphism(grid, rho_b, gamma0)
    E = transition_matrix(grid, rho_b, gamma0)
    n = grid.ndim
    grads = []
    for k in range(n):
        alpha = [0] * n
        alpha[k] = 1
        grads.append(grid.derivative(u, alpha))
    return np.array([sum(E[i, k] * grads[k] for k in range(n)) for i in range(n)])


def contact_angle_factor(rho_b, grid: CollarGrid) -> np.ndarray:
    """(1 + sum m_ij rho_i rho_j)^(1/2) on the contact boundary.

    The lambda-derivative of the extension vanishes there, so the
    ``1/(1 + rho_lambda)`` prefactor is identically one.
    """
    rho_b = np.asarray(rho_b)
    if not grid.tangential:
        return np.ones_like(rho_b, dtype=float)
    acc = 1.0
    nt = len(grid.tangential)
    for i in range(nt):
        e = [0] * nt
        e[i] = 1
        d = grid.boundary_derivative(rho_b, tuple(e))
        if grid.kind == "disk":
            r = 1.0 - rho_b
            acc = acc + d * d / (r * r)
        else:
            acc = acc + d * d
    return np.sqrt(acc)


def apply_e_rho(points, rho_func, collar: CollarMap, direction: str = "forward", tol: float = 1e-13, max_iter: int = 50,
                extension: str = "cutoff"):
    """Map physical points through e_rho or its inverse.

    ``rho_func(omega)`` returns the boundary deviation at tangential
    coordinates ``omega`` (shape (..., N-1)).  ``extension="cutoff"`` uses
    the collar cutoff; ``"constant"`` keeps rho constant along each normal
    line (a pure normal shift).  The inverse solves
    ``lam + rho_ext(omega, lam) = lam_y`` along each normal line by Newton's
    method.
    """
    pts = np.asarray(points, dtype=float)
    omega, lam = collar.to_collar(pts)
    g0 = collar.gamma0
    rb = np.asarray(rho_func(omega), dtype=float)
    check_amplitude(rb, g0)
    if extension == "constant":
        chi = lambda s, d=0: np.ones_like(s) if d == 0 else np.zeros_like(s)
    elif extension == "cutoff":
        chi = cutoff
    else:
        raise ValueError("extension is 'cutoff' or 'constant'")
    if np.min(1.0 + rb * chi(np.clip(lam, 0, None) / g0, 1) / g0) <= 0:
        raise GeometryError("map is not a diffeomorphism at the requested points")
    if direction == "forward":
        return collar.from_collar(omega, lam + rb * chi(lam / g0))
    if direction != "inverse":
        raise ValueError("direction is 'forward' or 'inverse'")
    x = lam - rb * chi(lam / g0)
    for _ in range(max_iter):
        f = x + rb * chi(x / g0) - lam
        fp = 1.0 + rb * chi(x / g0, 1) / g0
        step = f / fp
        x = x - step
        if np.max(np.abs(step), initial=0.0) <= tol:
            break
    return collar.from_collar(omega, x)


def trig_interpolant(axes, values):
    """Callable evaluating the trigonometric interpolant of samples on
    periodic ``axes`` (Nyquist terms folded into cosines)."""
    values = np.asarray(values)
    if not axes:
        const = values.item()
        return lambda omega: np.full(np.asarray(omega).shape[:-1], const)
    C = np.fft.fftn(values) / values.size
    letters = "abc"[: len(axes)]

    def basis(ax, w):
        k = ax.wavenumbers()
        arg = np.multiply.outer(w + math.pi, k)
        B = np.exp(1j * arg)
        if ax.count % 2 == 0:
            nyq = np.abs(k) == ax.count // 2
            B[..., nyq] = np.cos(arg[..., nyq])
        return B

    def f(omega):
        omega = np.asarray(omega, dtype=float)
        flat = omega.reshape(-1, omega.shape[-1])
        mats = [basis(ax, flat[:, d]) for d, ax in enumerate(axes)]
        spec = letters + "," + ",".join("q" + c for c in letters) + "->q"
        out = np.einsum(spec, C, *mats).reshape(omega.shape[:-1])
        return out.real if np.isrealobj(values) else out

    return f


# ------------------------------------------------------------------ residual

def transform_pde_residual(grid: CollarGrid, h, rho_b, rho_t_b, h_t, gamma0: float, coef=None) -> np.ndarray:
    """Nodewise h_t - [h_lambda/(1+rho_lambda)] rho_t + L_rho(h)."""
    check_amplitude(rho_b, gamma0)
    rj = extension_jet(grid, rho_b, gamma0)
    mj = map_jets(grid, rj)
    hj = field_jet(grid, h)
    parts = divergence_form(hj, coef, mj.E)
    n = grid.ndim
    hl = hj.d(n - 1).value
    rl = rj.d(n - 1).value
    rho_t = extend_boundary_function(rho_t_b, grid, gamma0, check=False)
    return h_t - hl / (1.0 + rl) * rho_t + parts.div.value
