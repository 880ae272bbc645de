import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rosenblatt_girsanov import FracOrder, SampledFunction, TimeGrid
from rosenblatt_girsanov.frac_calc import (
    discrete_l2_norm,
    frac_derivative,
    frac_integral,
    integration_by_parts_check,
    left_edge_moments,
    right_integral_family,
    weighted_frac_op,
)

# reference values from mpmath at 30 digits
D_HALF_OF_ONE_AT_1 = 0.564189583547756286948   # 1 / Gamma(1/2)
WEIGHTED_FWD_ONE_035 = 1.38479510202650996072  # B(0.65, 0.35) / Gamma(0.35), times x^0.35
IBP_X_AGAINST_1_MINUS_X_03 = 0.224723076113102856


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 256)


def test_order_validation():
    with pytest.raises(ValueError):
        FracOrder(0.3, "middle")
    with pytest.raises(ValueError):
        frac_integral(SampledFunction.constant(TimeGrid(1, 8)), FracOrder(0.0, "left"))
    with pytest.raises(ValueError):
        frac_derivative(SampledFunction.constant(TimeGrid(1, 8)), FracOrder(1.0, "left"))


def test_half_integral_of_one(grid):
    v = frac_integral(SampledFunction.constant(grid), FracOrder(0.5, "left")).values[-1]
    assert v == pytest.approx(1 / math.gamma(1.5), rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(0.05, 0.95), p=st.sampled_from([0.0, 1.0, 2.0]))
def test_integral_of_monomial(alpha, p):
    grid = TimeGrid(1.0, 128)
    f = SampledFunction.from_callable(grid, lambda x: x**p)
    got = frac_integral(f, FracOrder(alpha, "left"))(grid.nodes)
    want = math.gamma(p + 1) / math.gamma(p + 1 + alpha) * grid.nodes ** (p + alpha)
    tol = 1e-10 if p <= 1 else 2e-4
    np.testing.assert_allclose(got, want, atol=tol)


def test_right_integral_of_one(grid):
    got = frac_integral(SampledFunction.constant(grid), FracOrder(0.3, "right")).values
    want = (1 - grid.nodes) ** 0.3 / math.gamma(1.3)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_half_derivative_of_one(grid):
    got = frac_derivative(SampledFunction.constant(grid), FracOrder(0.5, "left"), points=[1.0])
    assert got[0] == pytest.approx(D_HALF_OF_ONE_AT_1, rel=1e-3)


def test_semigroup_and_inversion(grid):
    f = SampledFunction.from_callable(grid, lambda x: np.cos(3 * x) + x)
    a = frac_integral(frac_integral(f, FracOrder(0.2, "left")), FracOrder(0.5, "left"))
    b = frac_integral(f, FracOrder(0.7, "left"))
    assert np.max(np.abs(a.values - b.values)) < 1e-3
    back = frac_derivative(frac_integral(f, FracOrder(0.3, "left")), FracOrder(0.3, "left"))
    assert np.max(np.abs(back.values[1:-1] - f.values[1:-1])) < 1e-3


def test_weighted_forward_of_one(grid):
    got = weighted_frac_op(SampledFunction.constant(grid), 0.35, "forward")
    assert got.power == pytest.approx(0.35)
    np.testing.assert_allclose(got(grid.nodes[1:]), WEIGHTED_FWD_ONE_035 * grid.nodes[1:] ** 0.35, rtol=1e-9)


def test_weighted_roundtrip(grid):
    f = SampledFunction.from_callable(grid, lambda x: 1 + np.sin(x))
    back = weighted_frac_op(weighted_frac_op(f, 0.25, "forward"), 0.25, "inverse")
    assert np.max(np.abs(back.values[1:] - f.values[1:])) < 1e-3


def test_weighted_rejects_alpha():
    f = SampledFunction.constant(TimeGrid(1, 8))
    with pytest.raises(ValueError):
        weighted_frac_op(f, 0.5)
    with pytest.raises(ValueError):
        weighted_frac_op(f, 0.2, "sideways")


def test_integration_by_parts(grid):
    f = SampledFunction.from_callable(grid, lambda x: x)
    g = SampledFunction.from_callable(grid, lambda x: 1 - x)
    lhs, rhs = integration_by_parts_check(f, g, 0.3)
    assert lhs == pytest.approx(IBP_X_AGAINST_1_MINUS_X_03, rel=1e-4)
    assert rhs == pytest.approx(IBP_X_AGAINST_1_MINUS_X_03, rel=1e-4)


def test_left_edge_moments_sum_to_whole_integral():
    edges = np.array([0.0, 0.1, 0.35, 0.6])
    p0 = left_edge_moments(edges, np.array([0.6]), 0.4, -0.2)[0]
    # int_0^0.6 (0.6 - y)^(-0.6) y^(-0.2) dy = 0.6^0.2 B(0.4, 0.8)
    from scipy.special import beta
    assert p0.sum() == pytest.approx(0.6**0.2 * beta(0.4, 0.8), rel=1e-10)


def test_right_family_last_row_matches_integral(grid):
    f = SampledFunction.from_callable(grid, lambda x: 1 + x)
    pts = grid.midpoints
    fam = right_integral_family(f, 0.4, pts)
    np.testing.assert_allclose(fam[-1], frac_integral(f, FracOrder(0.4, "right"), points=pts), atol=1e-12)
    assert np.all(fam[0] == 0)


def test_l2_norm_step_and_linear():
    g = TimeGrid(2.0, 4)
    assert discrete_l2_norm(SampledFunction.constant(g, 3.0)) == pytest.approx(3 * math.sqrt(2))
    step = SampledFunction(g, [1, -1, 1, -1], kind="step")
    assert discrete_l2_norm(step) == pytest.approx(math.sqrt(2))
