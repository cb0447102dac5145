import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinfilm.errors import InvalidResolution, OutputError
from thinfilm.mesh import (
    PeriodicAxis, ScalarField, atomic_write_text, derivative_matrix, fd_derivative, fornberg_weights,
    graded_nodes, integrate, make_graded_mesh, read_field_csv, write_field_csv,
)


@given(st.integers(8, 300), st.floats(1.0, 4.0))
def test_graded_nodes_monotone_with_fixed_ends(M, q):
    x = graded_nodes(M, q)
    assert x[0] == 0.0 and x[-1] == 1.0
    assert np.all(np.diff(x) > 0)


@given(st.integers(8, 200), st.floats(1.5, 4.0))
def test_grading_clusters_at_wall(M, q):
    h = np.diff(graded_nodes(M, q))
    assert h[0] < h[-1]
    assert np.all(np.diff(h) > -1e-15)


def test_resolution_floor():
    with pytest.raises(InvalidResolution):
        make_graded_mesh(4)
    with pytest.raises(InvalidResolution):
        graded_nodes(16, 0.5)


@given(st.integers(0, 4), st.lists(st.floats(-1, 1), min_size=5, max_size=5, unique=True),
       st.floats(-1, 1))
def test_fornberg_exact_on_polynomials(m, pts, z):
    x = np.array(sorted(pts))
    if np.min(np.diff(x)) < 0.05:
        return
    w = fornberg_weights(z, x, m)[m]
    for deg in range(5):
        exact = 0.0 if deg < m else np.prod(range(deg - m + 1, deg + 1)) * z ** (deg - m)
        assert abs(w @ x**deg - exact) < 1e-7 * max(1, abs(exact))


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_graded_derivative_exact_on_quartic(order):
    x = make_graded_mesh(32).nodes
    u = 1 + x - 2 * x**2 + 0.5 * x**3 + 0.25 * x**4
    exact = {1: 1 - 4 * x + 1.5 * x**2 + x**3, 2: -4 + 3 * x + 3 * x**2, 3: 3 + 6 * x, 4: 6 + 0 * x}[order]
    # round-off grows like eps / h**order with h ~ 1e-3 at the wall
    tol = {1: 1e-9, 2: 1e-7, 3: 1e-5, 4: 1e-3}[order]
    assert np.max(np.abs(derivative_matrix(x, order) @ u - exact)) < tol


def test_periodic_derivative_converges():
    errs = []
    for n in (16, 32):
        ax = (PeriodicAxis(n), make_graded_mesh(8))
        X, _ = np.meshgrid(ax[0].coordinates(), ax[1].coordinates(), indexing="ij")
        d = fd_derivative(ScalarField(ax, np.sin(X)), 0, 1).values
        errs.append(np.max(np.abs(d - np.cos(X))))
    assert errs[1] < errs[0] / 30


def test_integrate_constant_field():
    ax = (PeriodicAxis(16), make_graded_mesh(16))
    f = ScalarField(ax, np.ones((16, 17)))
    assert abs(integrate(f) - 2 * np.pi) < 1e-12


def test_csv_round_trip(tmp_path):
    ax = (PeriodicAxis(8), make_graded_mesh(12))
    rng = np.random.default_rng(1)
    f = ScalarField(ax, rng.normal(size=(8, 13)))
    p = tmp_path / "f.csv"
    write_field_csv(f, str(p))
    g = read_field_csv(str(p))
    assert np.array_equal(g.values, f.values)
    assert g.axes[-1].grading_exponent == 2.0


def test_atomic_write_leaves_no_temp(tmp_path):
    p = tmp_path / "sub" / "a.txt"
    atomic_write_text(str(p), "x\n")
    assert p.read_text() == "x\n"
    assert os.listdir(p.parent) == ["a.txt"]


def test_atomic_write_reports_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OutputError):
        atomic_write_text(str(blocker / "x.txt"), "y")
