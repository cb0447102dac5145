import numpy as np
import pytest
import sympy as sp

from thinfilm.suites import _linear_run


@pytest.mark.parametrize("bottom", ["neumann", "dirichlet"])
def test_linear_mms_is_accurate(bottom):
    u = lambda om, lam, t: (1 + t) * sp.cos(om) * lam**2 * (1 + lam / 3)
    assert _linear_run(bottom, 32, 2, 0.05, u, Nx=8) < 5e-3


def test_linear_mms_improves_with_refinement():
    u = lambda om, lam, t: (1 + t) * sp.cos(om) * (lam**2 + sp.sin(2 * lam) * lam**2)
    e = [_linear_run("neumann", M, 2, 0.05, u, Nx=8) for M in (16, 32)]
    assert e[1] < e[0] / 3
    assert np.all(np.isfinite(e))
