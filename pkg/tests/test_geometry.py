import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinfilm.errors import GeometryError
from thinfilm.geometry import (
    CUTOFF_SMOOTHNESS, CollarMap, DomainSpec, apply_e_rho, check_amplitude, contact_angle_factor, cutoff,
    extend_boundary_function,
)
from thinfilm.grid import make_grid


@given(st.floats(-2.0, 3.0))
def test_cutoff_range(s):
    v = float(cutoff(s))
    assert 0.0 <= v <= 1.0


def test_cutoff_endpoints_and_smoothness():
    assert cutoff(0.0) == 1.0 and cutoff(1.0) == 0.0
    for m in range(1, CUTOFF_SMOOTHNESS + 1):
        assert abs(float(cutoff(1e-12, m))) < 1e-6
        assert abs(float(cutoff(1 - 1e-12, m))) < 1e-6
    s = np.linspace(0, 1, 2001)
    assert np.all(np.diff(cutoff(s)) <= 1e-15)
    assert np.all(cutoff(s) >= 0)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_cutoff_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert cutoff(lo) >= cutoff(hi)


@pytest.mark.parametrize("kind", ["strip", "disk"])
def test_chart_round_trip(kind):
    cm = CollarMap(DomainSpec(kind, 2))
    rng = np.random.default_rng(0)
    om = rng.uniform(-np.pi, np.pi, (50, 1))
    lam = rng.uniform(0, 0.4, 50)
    o2, l2 = cm.to_collar(cm.from_collar(om, lam))
    assert np.allclose(l2, lam, atol=1e-14)
    assert np.allclose(np.angle(np.exp(1j * (o2 - om))), 0, atol=1e-13)


@given(st.floats(-0.05, 0.05), st.integers(1, 3), st.integers(0, 1000))
def test_e_rho_inverse(amp, k, seed):
    cm = CollarMap(DomainSpec("strip", 2))
    rng = np.random.default_rng(seed)
    pts = np.stack([rng.uniform(-np.pi, np.pi, 40), rng.uniform(0, 0.8, 40)], axis=-1)
    rho = lambda om: amp * np.sin(k * om[..., 0])
    back = apply_e_rho(apply_e_rho(pts, rho, cm), rho, cm, "inverse")
    assert np.max(np.abs(back - pts)) < 1e-10


def test_e_rho_identity_beyond_collar():
    cm = CollarMap(DomainSpec("strip", 2))
    pts = np.array([[0.3, 0.7], [1.0, 0.9]])
    out = apply_e_rho(pts, lambda om: 0.05 + 0 * om[..., 0], cm)
    assert np.array_equal(out, pts)


def test_amplitude_guard():
    with pytest.raises(GeometryError):
        check_amplitude(np.array([0.3]), 0.5)


def test_extension_matches_boundary():
    g = make_grid("strip", 2, 16, 16)
    rb = 0.01 * np.cos(g.omega[0])
    ext = extend_boundary_function(rb, g, 0.5)
    assert np.allclose(ext[..., 0], rb)
    assert np.all(ext[..., -1] == 0)


def test_contact_angle_factor():
    g = make_grid("strip", 2, 16, 16)
    assert np.all(contact_angle_factor(np.zeros(16), g) == 1.0)
    rb = 0.1 * np.sin(g.omega[0])
    K = contact_angle_factor(rb, g)
    assert np.allclose(K, np.sqrt(1 + (0.1 * np.cos(g.omega[0])) ** 2), atol=1e-12)
