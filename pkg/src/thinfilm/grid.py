"""Tensor grid for solver layers: periodic tangential axes times a graded
wall-normal axis.

Tangential derivatives are spectral (FFT symbols), wall-normal derivatives
use the nodal stencils of :mod:`thinfilm.mesh`.  Both commute, so a mixed
derivative ``D^alpha`` is the product of the two actions and every
per-mode operator built from the same symbols is consistent with the
nodal one.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Mesh1D, PeriodicAxis, ScalarField, derivative_matrix


def multi_indices(ndim: int, order: int) -> list[tuple]:
    """All multi-indices with |alpha| <= order, graded then lexicographic."""
    out = []
    for total in range(order + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=ndim) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return out


def symbol(k: np.ndarray, power: int, count: int) -> np.ndarray:
    """Spectral symbol (ik)^power; odd powers drop the Nyquist mode."""
    s = (1j * k) ** power
    if power % 2 == 1 and count % 2 == 0:
        s = np.where(np.abs(k) == count // 2, 0.0, s)
    return s


@dataclass(frozen=True, eq=False)
class CollarGrid:
    """Computational grid in collar coordinates (omega, lambda).

    ``kind`` is ``"strip"`` or ``"disk"``; ``length`` is the wall-normal
    extent (1 for the strip, 1 - inner radius for the disk annulus).
    """

    tangential: tuple
    normal: Mesh1D
    kind: str = "strip"
    length: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "tangential", tuple(self.tangential))
        if self.kind not in ("strip", "disk"):
            raise ValueError(f"unknown domain kind {self.kind}")
        if self.kind == "disk" and len(self.tangential) != 1:
            raise ValueError("the disk grid has exactly one tangential axis")

    @property
    def ndim(self) -> int:
        return len(self.tangential) + 1

    @property
    def shape(self) -> tuple:
        return tuple(a.count for a in self.tangential) + (self.normal.size,)

    @property
    def tshape(self) -> tuple:
        return tuple(a.count for a in self.tangential)

    @property
    def axes(self) -> tuple:
        return self.tangential + (self.normal,)

    @cached_property
    def lam(self) -> np.ndarray:
        return self.normal.nodes * self.length

    @cached_property
    def omega(self) -> list[np.ndarray]:
        return [a.coordinates() for a in self.tangential]

    def coords(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (omega_1..omega_{N-1}, lambda)."""
        out = []
        n = self.ndim
        for i, w in enumerate(self.omega):
            s = [1] * n
            s[i] = w.size
            out.append(w.reshape(s))
        out.append(self.lam.reshape([1] * (n - 1) + [self.lam.size]))
        return out

    def full_coords(self) -> list[np.ndarray]:
        return [np.broadcast_to(c, self.shape) for c in self.coords()]

    @cached_property
    def wavenumbers(self) -> list[np.ndarray]:
        return [a.wavenumbers() for a in self.tangential]

    def mode_grid(self) -> list[np.ndarray]:
        """Wavenumber arrays broadcast to the tangential shape."""
        if not self.tangential:
            return []
        return list(np.meshgrid(*self.wavenumbers, indexing="ij"))

    def tangential_symbol(self, talpha) -> np.ndarray:
        """Symbol of d^talpha over the tangential Fourier grid."""
        s = np.ones(self.tshape, dtype=complex)
        for k, a, ax in zip(self.mode_grid(), talpha, self.tangential):
            s = s * symbol(k, a, ax.count)
        return s

    def normal_matrix(self, order: int):
        return derivative_matrix(self.lam, order)

    # ------------------------------------------------------------ derivatives
    def tangential_derivative(self, u: np.ndarray, talpha, taxes=None) -> np.ndarray:
        """Spectral derivative over the leading (tangential) axes of ``u``."""
        if not self.tangential or not any(talpha):
            return u
        if np.iscomplexobj(u):
            return self.tangential_derivative(u.real, talpha) + 1j * self.tangential_derivative(u.imag, talpha)
        nt = len(self.tangential)
        axes = tuple(range(nt))
        U = np.fft.fftn(u, axes=axes)
        sym = self.tangential_symbol(talpha)
        sym = sym.reshape(sym.shape + (1,) * (u.ndim - nt))
        out = np.fft.ifftn(U * sym, axes=axes)
        return out.real if np.isrealobj(u) else out

    def normal_derivative(self, u: np.ndarray, order: int) -> np.ndarray:
        if order == 0:
            return u
        D = self.normal_matrix(order)
        flat = u.reshape(-1, u.shape[-1])
        return (D @ flat.T).T.reshape(u.shape)

    def derivative(self, u: np.ndarray, alpha) -> np.ndarray:
        alpha = tuple(alpha)
        v = self.normal_derivative(u, alpha[-1])
        return self.tangential_derivative(v, alpha[:-1])

    def derivatives(self, u: np.ndarray, order: int) -> dict:
        """All D^alpha u with |alpha| <= order, sharing FFTs."""
        if np.iscomplexobj(u) and self.tangential:
            # split so that round-off in the real part never leaks into the
            # imaginary part (complex-step derivatives rely on this)
            re, im = self.derivatives(u.real, order), self.derivatives(u.imag, order)
            return {a: re[a] + 1j * im[a] for a in re}
        out = {}
        nt = len(self.tangential)
        for m in range(order + 1):
            v = self.normal_derivative(u, m)
            if nt == 0:
                out[(m,)] = v
                continue
            V = np.fft.fftn(v, axes=tuple(range(nt)))
            for talpha in multi_indices(nt, order - m):
                if not any(talpha):
                    out[talpha + (m,)] = v
                    continue
                sym = self.tangential_symbol(talpha)[..., None]
                w = np.fft.ifftn(V * sym, axes=tuple(range(nt)))
                out[talpha + (m,)] = w.real if np.isrealobj(u) else w
        return out

    def boundary_derivative(self, b: np.ndarray, talpha) -> np.ndarray:
        """Spectral tangential derivative of a boundary (tangential-only) array."""
        if not self.tangential or not any(talpha):
            return b
        if np.iscomplexobj(b):
            return self.boundary_derivative(b.real, talpha) + 1j * self.boundary_derivative(b.imag, talpha)
        nt = len(self.tangential)
        B = np.fft.fftn(b, axes=tuple(range(nt)))
        out = np.fft.ifftn(B * self.tangential_symbol(talpha), axes=tuple(range(nt)))
        return out.real if np.isrealobj(b) else out

    # ------------------------------------------------------------ quadrature
    def integrate(self, u: np.ndarray) -> float:
        """Trapezoid in lambda, rectangle rule on periodic axes."""
        v = np.trapezoid(u, self.lam, axis=-1)
        for ax in reversed(self.tangential):
            v = v.sum(axis=-1) * ax.spacing
        return v

    def field(self, values, t=None) -> ScalarField:
        return ScalarField(self.axes, values, t)


def make_grid(kind: str, N: int, Nx: int, M: int, q: float = 2.0, inner_radius: float = 0.5) -> CollarGrid:
    from .mesh import make_graded_mesh

    mesh = make_graded_mesh(M, q)
    if kind == "strip":
        if N not in (1, 2, 3):
            raise ValueError("strip dimension must be 1, 2 or 3")
        return CollarGrid(tuple(PeriodicAxis(Nx) for _ in range(N - 1)), mesh, "strip", 1.0)
    if kind == "disk":
        if N != 2:
            raise ValueError("the disk is two-dimensional")
        if not 0.0 < inner_radius < 1.0:
            raise ValueError("inner radius must lie in (0, 1)")
        return CollarGrid((PeriodicAxis(Nx),), mesh, "disk", 1.0 - inner_radius)
    raise ValueError(f"unknown domain kind {kind}")


def factorial(alpha) -> float:
    return float(np.prod([math.factorial(a) for a in alpha]))
