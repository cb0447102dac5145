import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinfilm.errors import ConfigError, InvalidResolution
from thinfilm.holder import (
    CALIBRATED_CONSTANTS, PairPlan, WeightFunction, c4gamma_norm, calibrate, embedding_check,
    interpolation_report, smooth_corpus, time_seminorm, weighted_holder_seminorm,
)
from thinfilm.mesh import PeriodicAxis, ScalarField, make_graded_mesh

CORPUS = smooth_corpus(6, seed=3)
PLAN = PairPlan(2000, 1)


@given(st.integers(0, 5), st.floats(-10, 10).filter(lambda a: abs(a) > 1e-3), st.floats(0.05, 0.95))
def test_seminorm_scaling(k, a, gamma):
    f = CORPUS[k]
    base = weighted_holder_seminorm(f, gamma, pairs=PLAN)
    scaled = weighted_holder_seminorm(f.with_values(a * f.values), gamma, pairs=PLAN)
    assert abs(scaled - abs(a) * base) <= 1e-12 * abs(a) * base


@given(st.integers(0, 5), st.integers(0, 5), st.floats(0.05, 0.95))
def test_seminorm_subadditive(i, j, gamma):
    f, g = CORPUS[i], CORPUS[j]
    lhs = weighted_holder_seminorm(f.with_values(f.values + g.values), gamma, pairs=PLAN)
    rhs = weighted_holder_seminorm(f, gamma, pairs=PLAN) + weighted_holder_seminorm(g, gamma, pairs=PLAN)
    assert lhs <= rhs * (1 + 1e-12)


@given(st.integers(0, 5), st.integers(100, 3000))
def test_sampling_is_nested(k, n):
    f = CORPUS[k]
    small = weighted_holder_seminorm(f, 0.5, pairs=PairPlan(n, 4))
    large = weighted_holder_seminorm(f, 0.5, pairs=PairPlan(2 * n, 4))
    assert small <= large


def test_constant_field_has_zero_seminorm():
    f = CORPUS[0].with_values(np.full(CORPUS[0].shape, 3.0))
    assert weighted_holder_seminorm(f, 0.5, pairs=PLAN) == 0.0


def test_exact_pairs_dominate_sampled():
    axes = (PeriodicAxis(8), make_graded_mesh(8))
    rng = np.random.default_rng(0)
    f = ScalarField(axes, rng.normal(size=(8, 9)))
    exact = weighted_holder_seminorm(f, 0.5, pairs=PairPlan(exact=True))
    assert weighted_holder_seminorm(f, 0.5, pairs=PairPlan(50, 0)) <= exact


def test_gamma_range():
    with pytest.raises(ConfigError):
        weighted_holder_seminorm(CORPUS[0], 1.0)


def test_weight_equivalence():
    assert WeightFunction("wall_normal").equivalence_constant() == 1.0
    nu = WeightFunction("disk").equivalence_constant()
    assert 0 < nu <= 1
    d = WeightFunction("disk")(np.linspace(0, 1, 101))
    assert np.all(d >= 0) and d[-1] == 1.0


def test_c4_norm_needs_resolution():
    axes = (PeriodicAxis(4), make_graded_mesh(8))
    with pytest.raises(InvalidResolution):
        c4gamma_norm(ScalarField(axes, np.zeros((4, 9))), 0.5)


def test_c4_norm_report_is_deterministic():
    a = c4gamma_norm(CORPUS[1], 0.5, pairs=PLAN).to_text()
    b = c4gamma_norm(CORPUS[1], 0.5, pairs=PLAN).to_text()
    assert a == b and "total" in a


def test_time_seminorm_linear_in_time():
    v = np.array([[0.0], [1.0], [2.0]])
    assert abs(time_seminorm(v, 1.0, 1.0) - 1.0) < 1e-14


def test_calibrated_constants_cover_corpus():
    for f in smooth_corpus(4):
        assert interpolation_report(f, 0.25, 0.1).passed
        assert embedding_check(f, 0.25).passed


def test_calibration_reproduces_frozen_table():
    fresh = calibrate(n=20)
    for k, v in fresh.items():
        assert v <= CALIBRATED_CONSTANTS[k] + 1e-12
