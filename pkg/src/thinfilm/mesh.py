"""Grids, nodal fields and difference operators.

Wall-normal axes are graded power meshes on [0, 1]; tangential axes are
uniform and periodic on [-pi, pi).  Fields are dense arrays whose axis
order follows the tuple of axes they were built on.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidResolution, OutputError

MIN_RESOLUTION = 8


@dataclass(frozen=True, eq=False)
class Mesh1D:
    nodes: np.ndarray
    grading_exponent: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        if x.ndim != 1 or x.size < 2:
            raise InvalidResolution("a mesh needs at least two nodes")
        if x[0] != 0.0 or x[-1] != 1.0 or np.any(np.diff(x) <= 0):
            raise InvalidResolution("mesh nodes must increase strictly from 0 to 1")
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def M(self) -> int:
        return self.nodes.size - 1

    @property
    def periodic(self) -> bool:
        return False

    def coordinates(self) -> np.ndarray:
        return self.nodes


@dataclass(frozen=True)
class PeriodicAxis:
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise InvalidResolution("periodic axis needs at least one point")

    @property
    def size(self) -> int:
        return self.count

    @property
    def spacing(self) -> float:
        return 2.0 * math.pi / self.count

    @property
    def periodic(self) -> bool:
        return True

    def coordinates(self) -> np.ndarray:
        return -math.pi + self.spacing * np.arange(self.count)

    def wavenumbers(self) -> np.ndarray:
        """Integer wavenumbers in numpy FFT order."""
        return np.fft.fftfreq(self.count, d=1.0 / self.count)


Axis = Union[Mesh1D, PeriodicAxis]


def graded_nodes(M: int, q: float) -> np.ndarray:
    """Nodes (j/M)**q without the resolution floor."""
    if M < 1:
        raise InvalidResolution(f"M={M} must be positive")
    if q < 1:
        raise InvalidResolution(f"grading exponent q={q} must be >= 1")
    j = np.arange(M + 1, dtype=float)
    return (j / M) ** q


def make_graded_mesh(M: int, q: float = 2.0) -> Mesh1D:
    if M < MIN_RESOLUTION:
        raise InvalidResolution(f"M={M} below the minimum resolution {MIN_RESOLUTION}")
    return Mesh1D(graded_nodes(M, q), float(q))


@dataclass(frozen=True, eq=False)
class ScalarField:
    axes: tuple
    values: np.ndarray
    time_stamp: float | None = None

    def __post_init__(self):
        axes = tuple(self.axes)
        vals = np.asarray(self.values)
        shape = tuple(a.size for a in axes)
        if vals.size != int(np.prod(shape, dtype=int)):
            raise ValueError(f"values of size {vals.size} do not fit axes {shape}")
        vals = vals.reshape(shape)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", vals)
        if self.time_stamp is not None and self.time_stamp < 0:
            raise ValueError("time stamps are nonnegative")

    @property
    def shape(self):
        return self.values.shape

    def coords(self) -> list[np.ndarray]:
        return np.meshgrid(*[a.coordinates() for a in self.axes], indexing="ij")

    def with_values(self, values, time_stamp=None) -> "ScalarField":
        ts = self.time_stamp if time_stamp is None else time_stamp
        return ScalarField(self.axes, values, ts)


@dataclass(frozen=True, eq=False)
class FieldSeries:
    slabs: tuple
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        slabs = tuple(self.slabs)
        if not slabs:
            raise ValueError("a series needs at least one slab")
        shape = slabs[0].shape
        for i, s in enumerate(slabs):
            if s.shape != shape or len(s.axes) != len(slabs[0].axes):
                raise ValueError("all slabs must share axes")
            t = self.t0 + i * self.dt
            if s.time_stamp is not None and not math.isclose(s.time_stamp, t, rel_tol=1e-12, abs_tol=1e-14):
                raise ValueError(f"slab {i} stamped {s.time_stamp}, expected {t}")
        object.__setattr__(self, "slabs", slabs)

    @classmethod
    def from_array(cls, axes, arr, dt, t0=0.0):
        arr = np.asarray(arr)
        return cls(tuple(ScalarField(axes, a, t0 + i * dt) for i, a in enumerate(arr)), dt, t0)

    @property
    def axes(self):
        return self.slabs[0].axes

    def array(self) -> np.ndarray:
        return np.stack([s.values for s in self.slabs])

    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.slabs))

    def __len__(self):
        return len(self.slabs)


# ---------------------------------------------------------------- stencils

def fornberg_weights(z: float, x: Sequence[float], m: int) -> np.ndarray:
    """Weights for derivatives 0..m at ``z`` from samples at ``x``.

    Returns an array of shape (m+1, len(x)); row k holds the k-th
    derivative weights.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((m + 1, n))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[k, i] = c1 * (k * c[k - 1, i - 1] - c5 * c[k, i - 1]) / c2
                c[0, i] = -c1 * c5 * c[0, i - 1] / c2
            for k in range(mn, 0, -1):
                c[k, j] = (c4 * c[k, j] - k * c[k - 1, j]) / c3
            c[0, j] = c4 * c[0, j] / c3
        c1 = c2
    return c


# stencil widths: nonuniform (graded) axes and periodic axes
_GRADED_WIDTH = {0: 1, 1: 5, 2: 5, 3: 7, 4: 7}
_PERIODIC_WIDTH = {1: 7, 2: 7, 3: 9, 4: 9}


def _check_order(order):
    if order not in (1, 2, 3, 4):
        raise ValueError(f"derivative order {order} not in 1..4")


@lru_cache(maxsize=256)
def _graded_matrix(nodes_key: tuple, order: int) -> sp.csr_matrix:
    x = np.array(nodes_key)
    n = x.size
    if order == 0:
        return sp.identity(n, format="csr")
    width = min(_GRADED_WIDTH[order], n)
    half = width // 2
    rows, cols, vals = [], [], []
    for i in range(n):
        lo = min(max(i - half, 0), n - width)
        idx = np.arange(lo, lo + width)
        w = fornberg_weights(x[i], x[idx], order)[order]
        rows.extend([i] * width)
        cols.extend(idx.tolist())
        vals.extend(w.tolist())
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def derivative_matrix(nodes, order: int) -> sp.csr_matrix:
    """Sparse nodal derivative matrix of the given order on arbitrary nodes."""
    nodes = np.asarray(nodes, dtype=float)
    if order != 0:
        _check_order(order)
        if nodes.size < order + 3:
            raise InvalidResolution(f"{nodes.size} nodes cannot carry an order-{order} stencil")
    return _graded_matrix(tuple(nodes.tolist()), order)


@lru_cache(maxsize=64)
def periodic_weights(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered unit-spacing weights and integer offsets for a periodic axis."""
    width = _PERIODIC_WIDTH[order]
    offsets = np.arange(width) - width // 2
    w = fornberg_weights(0.0, offsets.astype(float), order)[order]
    return w, offsets


def _move(values, axis, fn):
    v = np.moveaxis(values, axis, -1)
    return np.moveaxis(fn(v), -1, axis)


def fd_derivative(fld: ScalarField, axis: int, order: int) -> ScalarField:
    _check_order(order)
    if not 0 <= axis < len(fld.axes):
        raise IndexError(f"axis {axis} out of range")
    ax = fld.axes[axis]
    if isinstance(ax, PeriodicAxis):
        w, offs = periodic_weights(order)
        if ax.count < offs.size:
            raise InvalidResolution(f"periodic axis with {ax.count} points is too short")
        hpow = ax.spacing ** order
        out = sum(wk * np.roll(fld.values, -int(o), axis=axis) for wk, o in zip(w, offs)) / hpow
    else:
        D = derivative_matrix(ax.nodes, order)
        out = _move(fld.values, axis, lambda v: (D @ v.reshape(-1, v.shape[-1]).T).T.reshape(v.shape))
    return fld.with_values(out)


def power_difference(fld: ScalarField, axis: int, step: float, order: int) -> ScalarField:
    """k-th power forward difference with step ``step`` along one axis.

    Undefined entries (sample points leaving [0, 1] on a wall-normal axis)
    are NaN.
    """
    if not 0 <= axis < len(fld.axes):
        raise IndexError(f"axis {axis} out of range")
    if step <= 0:
        raise ValueError("step must be positive")
    if order < 1:
        raise ValueError("order must be >= 1")
    ax = fld.axes[axis]
    coeff = [(-1) ** (order - j) * math.comb(order, j) for j in range(order + 1)]
    if isinstance(ax, PeriodicAxis):
        shift = step / ax.spacing
        s = int(round(shift))
        if abs(shift - s) > 1e-9 * max(1.0, abs(shift)):
            raise ValueError("periodic step must be a multiple of the spacing")
        out = sum(c * np.roll(fld.values, -j * s, axis=axis) for j, c in enumerate(coeff))
        return fld.with_values(out)
    x = ax.nodes

    def shifted(v, j):
        pts = x + j * step
        flat = v.reshape(-1, v.shape[-1])
        res = np.array([np.interp(np.minimum(pts, 1.0), x, row) for row in flat])
        return res.reshape(v.shape)

    def fn(v):
        acc = sum(c * shifted(v, j) for j, c in enumerate(coeff))
        acc = acc.astype(float)
        acc[..., x + order * step > 1.0 + 1e-12] = np.nan
        return acc

    return fld.with_values(_move(np.asarray(fld.values, dtype=float), axis, fn))


def integrate(fld: ScalarField, axis: Union[int, str] = "all"):
    """Trapezoid on wall-normal axes, rectangle rule on periodic axes."""
    if axis == "all":
        vals = fld.values
        for k in reversed(range(len(fld.axes))):
            vals = _integrate_axis(vals, fld.axes[k], k)
        return float(vals) if np.isrealobj(vals) else complex(vals)
    vals = _integrate_axis(fld.values, fld.axes[axis], axis)
    axes = tuple(a for i, a in enumerate(fld.axes) if i != axis)
    return ScalarField(axes, vals, fld.time_stamp)


def _integrate_axis(values, ax, k):
    if isinstance(ax, PeriodicAxis):
        return values.sum(axis=k) * ax.spacing
    return np.trapezoid(values, ax.nodes, axis=k)


# ---------------------------------------------------------------- CSV I/O

def atomic_write_text(path: str, text: str) -> None:
    """Write through a temporary file in the same directory, then rename."""
    d = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(d, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def field_to_csv_text(fld: ScalarField) -> str:
    grids = fld.coords()
    n = len(fld.axes)
    lines = [",".join([f"x{i + 1}" for i in range(n)] + ["value"])]
    cols = [g.ravel() for g in grids] + [np.real(fld.values).ravel()]
    for row in zip(*cols):
        lines.append(",".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def write_field_csv(fld: ScalarField, path: str) -> None:
    atomic_write_text(path, field_to_csv_text(fld))


def read_field_csv(path: str) -> ScalarField:
    """Read a field dump; the last coordinate is wall-normal, others periodic."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    header, body = rows[0], [r for r in rows[1:] if r]
    if header[-1] != "value":
        raise ValueError("CSV field dump must end with a 'value' column")
    data = np.array(body, dtype=float)
    ncoord = data.shape[1] - 1
    axes = []
    for k in range(ncoord):
        u = np.unique(data[:, k])
        if k == ncoord - 1:
            if not np.isclose(u[0], 0.0) or u[-1] <= 0:
                raise ValueError("the wall-normal column must start at 0")
            # a collar of width L (disk dumps) is read on the unit interval
            u = u / u[-1]
            u[0], u[-1] = 0.0, 1.0
            q = _guess_grading(u)
            axes.append(Mesh1D(u, q))
        else:
            axes.append(PeriodicAxis(u.size))
    shape = tuple(a.size for a in axes)
    return ScalarField(tuple(axes), data[:, -1].reshape(shape))


def _guess_grading(u):
    M = u.size - 1
    for q in (1.0, 2.0, 3.0):
        if np.allclose(u, graded_nodes(M, q), atol=1e-14):
            return q
    return 1.0
