import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinfilm.errors import BallExitError, DegeneracyError
from thinfilm.grid import make_grid
from thinfilm.newton import (
    SlabJacobian, StatePair, boundary_coefficients, boundary_row_from_coefficients, build_background,
    builtin_h0, chord_newton_solve, compute_rho1, diagnostics, frechet_apply, make_problem, random_direction,
    reconstruct_physical, Residual, residual_F, residual_norm,
)


@pytest.fixture(scope="module")
def strip():
    data = make_problem("strip", 2, 16, 16, T=0.05, nslabs=2, h0="wedge_perturbed")
    return data, build_background(data)


@pytest.fixture(scope="module")
def disk():
    data = make_problem("disk", 2, 16, 16, T=0.05, nslabs=2, h0="cap_perturbed")
    return data, build_background(data)


def test_builtins_vanish_on_wall_and_scale():
    g = make_grid("strip", 2, 8, 16)
    h = builtin_h0("wedge_perturbed", g, 0.2)
    assert np.all(h[..., 0] == 0) and np.all(h[..., 1:] > 0)
    assert np.allclose(g.normal_derivative(h, 1)[..., 0], 0.2)


def test_positive_contact_datum_rejected():
    with pytest.raises(DegeneracyError):
        make_problem("strip", 2, 8, 16, g=0.1)


def test_steady_wedge_has_tiny_residual():
    data = make_problem("strip", 2, 8, 16, T=0.05, nslabs=2, h0="wedge")
    bg = build_background(data)
    assert residual_norm(*residual_F(StatePair.zeros(data.grid, 2), bg, data)) < 1e-6
    assert np.allclose(compute_rho1(data.h0, data.grid), 0, atol=1e-8)


@pytest.mark.parametrize("which", ["strip", "disk"])
def test_boundary_row_matches_complex_step(which, strip, disk):
    data, bg = strip if which == "strip" else disk
    d = random_direction(data.grid, bg.nslabs, seed=2)
    J1, J2 = frechet_apply(d, bg, data)
    for n in range(1, bg.nslabs + 1):
        coef = boundary_coefficients(bg, data, n)
        row = boundary_row_from_coefficients(coef, data.grid, d.u[n], d.delta[n])
        assert np.max(np.abs(row - J2[n])) <= 1e-10 * max(1.0, np.max(np.abs(J2[n])))


@settings(max_examples=5)
@given(st.integers(0, 10_000))
def test_frechet_derivative_is_linear(strip, seed):
    data, bg = strip
    a = random_direction(data.grid, bg.nslabs, seed)
    b = random_direction(data.grid, bg.nslabs, seed + 1)
    Ja, Jb, Jab = (frechet_apply(x, bg, data) for x in (a, b, a + b.scale(2.0)))
    for k in range(2):
        assert np.allclose(Jab[k], Ja[k] + 2 * Jb[k], atol=1e-9 * max(1, np.max(np.abs(Jab[k]))))


def test_slab_jacobian_matches_probe(strip):
    data, bg = strip
    res = Residual(data, bg)
    J = SlabJacobian(res, 1)
    rng = np.random.default_rng(0)
    du = rng.normal(size=data.grid.shape) * 1e-3
    dd = rng.normal(size=data.grid.tshape) * 1e-3
    du[..., 0] = 0
    x = np.concatenate([du.ravel(), dd.ravel()])
    p1, p2 = J._probe(du, dd)
    lhs = J.matrix @ x
    ref = np.concatenate([np.ravel(p1), np.ravel(p2)])
    assert np.max(np.abs(lhs - ref)) <= 1e-10 * np.max(np.abs(ref))


def test_ball_exit_detected(strip):
    data, bg = strip
    psi = StatePair.zeros(data.grid, bg.nslabs)
    psi.delta[1] = 0.4
    with pytest.raises(BallExitError):
        residual_F(psi, bg, data)


@pytest.mark.slow
def test_newton_strip_converges_and_conserves_mass(strip):
    data, bg = strip
    h, rho, st_ = chord_newton_solve(data, tol=1e-8, background=bg)
    assert st_.converged and not st_.flag
    d = diagnostics(reconstruct_physical(h, rho, data.grid, data.domain), data.grid, data, rho)
    assert d["mass_drift"] < 1e-3 and d["positivity_ok"] and d["angle_error"] < 1e-7
    h2 = st_.history
    assert all(b < a for a, b in zip(h2, h2[1:]))


def test_newton_reports_max_iter(strip):
    data, bg = strip
    _, _, st_ = chord_newton_solve(data, tol=1e-14, max_iter=1, background=bg)
    assert not st_.converged and st_.flag == "max_iter"
