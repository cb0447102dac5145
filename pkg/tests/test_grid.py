import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinfilm.grid import make_grid, multi_indices


def test_multi_indices_count():
    assert len(multi_indices(2, 4)) == 15
    assert all(sum(a) <= 4 for a in multi_indices(3, 4))


@pytest.mark.parametrize("kind", ["strip", "disk"])
def test_tangential_derivative_spectral(kind):
    g = make_grid(kind, 2, 16, 16)
    om, lam = g.coords()
    u = np.broadcast_to(np.sin(2 * om) * (1 + lam), g.shape)
    d = g.tangential_derivative(u, (1,))
    assert np.max(np.abs(d - 2 * np.cos(2 * om) * (1 + lam))) < 1e-12


@given(st.integers(0, 2**31 - 1))
def test_complex_input_splits_real_and_imaginary(seed):
    g = make_grid("strip", 2, 16, 16)
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
    z = g.derivatives(a + 1e-30j * b, 2)
    ra, rb = g.derivatives(a, 2), g.derivatives(b, 2)
    for k in z:
        assert np.array_equal(z[k].real, ra[k])
        scale = 1e-30 * np.max(np.abs(rb[k]))
        assert np.max(np.abs(z[k].imag - 1e-30 * rb[k])) <= 1e-12 * scale


def test_normal_derivative_polynomial():
    g = make_grid("strip", 1, 8, 32)
    lam = g.lam
    assert np.max(np.abs(g.normal_derivative(lam**3, 1) - 3 * lam**2)) < 1e-8


def test_disk_collar_width():
    g = make_grid("disk", 2, 16, 16)
    assert abs(g.lam[-1] - 0.5) < 1e-15
