import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rosenblatt_girsanov import SampledFunction, TimeGrid, kernels

# mpmath, 30 digits
C_075 = 0.267411158757997581025
D_075 = 0.659828879073858016582
C_0875 = 0.330965797990404104710
ROSENBLATT_K_075_AT_03_06 = 0.356382913677095936   # K^0.75_1(0.3, 0.6)


def test_constants_at_three_quarters():
    hp = kernels.make_hurst(0.75)
    assert hp.cH == pytest.approx(C_075, rel=1e-12)
    assert hp.dH == pytest.approx(D_075, rel=1e-12)
    assert hp.cHalf == pytest.approx(C_0875, rel=1e-12)
    assert hp.eH == pytest.approx(C_0875**2 * D_075, rel=1e-12)
    assert hp.companion.H == pytest.approx(0.875)


@pytest.mark.parametrize("H", [0.5, 1.0, 0.2, float("nan")])
def test_hurst_range(H):
    with pytest.raises(ValueError):
        kernels.make_hurst(H)


@settings(max_examples=30, deadline=None)
@given(H=st.floats(0.55, 0.95), s=st.floats(0.01, 2.0), t=st.floats(0.01, 2.0))
def test_fbm_covariance_properties(H, s, t):
    r = kernels.fbm_covariance(s, t, H)
    assert r == pytest.approx(kernels.fbm_covariance(t, s, H))
    assert kernels.fbm_covariance(t, t, H) == pytest.approx(t ** (2 * H))
    assert abs(r) <= np.sqrt(s ** (2 * H) * t ** (2 * H)) * (1 + 1e-12)


def test_kernel_derivative_domain():
    assert kernels.volterra_kernel_deriv(0.75, 1.0, 0.5) == pytest.approx(C_075 * 2**0.25 * 0.5**-0.75)
    with pytest.raises(ValueError):
        kernels.volterra_kernel_deriv(0.75, 0.5, 0.5)


def test_volterra_kernel_isometry():
    grid = TimeGrid(1.0, 256)
    km = kernels.volterra_kernel(0.7, grid)
    cov = (km.entries * km.partition.widths) @ km.entries.T
    exact = kernels.fbm_covariance(grid.nodes[:, None], grid.nodes[None, :], 0.7)
    assert np.max(np.abs(cov - exact)) < 5e-3
    assert np.all(km.entries[0] == 0)
    # causality: row i only touches noise cells inside (0, t_i]
    assert np.all(km.entries[3][km.partition.parent >= 3] == 0)


def test_pointwise_rosenblatt_kernel():
    assert kernels.rosenblatt_kernel(0.75, 1.0, 0.3, 0.6) == pytest.approx(ROSENBLATT_K_075_AT_03_06, rel=1e-9)
    assert kernels.rosenblatt_kernel(0.75, 1.0, 0.6, 0.3) == pytest.approx(ROSENBLATT_K_075_AT_03_06, rel=1e-9)
    assert kernels.rosenblatt_kernel(0.75, 0.5, 0.3, 0.6) == 0.0
    with pytest.raises(ValueError):
        kernels.rosenblatt_kernel(0.75, 1.0, 0.3, 0.3)


def test_kernel_matrix_against_pointwise_values():
    grid = TimeGrid(1.0, 64)
    K = kernels.rosenblatt_kernel_matrix(0.75, grid)
    part = kernels.volterra_basis(kernels.make_hurst(0.875), grid).partition
    j = np.searchsorted(part.edges, 0.3) - 1
    k = np.searchsorted(part.edges, 0.6) - 1
    mid = kernels.rosenblatt_kernel(0.75, 1.0, part.midpoints[j], part.midpoints[k])
    assert K[j, k] == pytest.approx(mid, rel=2e-2)
    np.testing.assert_allclose(K, K.T, atol=1e-14)


@pytest.mark.parametrize("H", [0.6, 0.75, 0.9])
def test_variance_oracle_is_t_to_2H(H):
    for t in (0.5, 1.0):
        assert kernels.rosenblatt_variance_oracle(H, t) == pytest.approx(t ** (2 * H), rel=1e-9)


def test_discrete_norm_approaches_oracle():
    v = [2 * kernels.rosenblatt_l2_norm_sq(0.75, TimeGrid(1.0, n)) for n in (64, 256)]
    assert abs(v[1] - 1) < abs(v[0] - 1) < 0.05


@pytest.mark.parametrize("alpha", [0.15, 0.25, 0.35])
def test_beta_identity(alpha):
    for u, v in ((0.3, 0.7), (0.5, 0.9)):
        lhs = kernels.beta_identity_lhs(alpha, u, v)
        assert lhs == pytest.approx(abs(u - v) ** (2 * alpha - 1), rel=1e-2)


def test_adjoint_of_indicator_isometry():
    grid = TimeGrid(1.0, 256)
    km = kernels.volterra_kernel(0.75, grid)
    part = km.partition
    one = SampledFunction(grid, np.ones(grid.n), kind="step")
    vals = kernels.adjoint_op(one, 0.75, points=part.midpoints)
    # d1K* 1_(0,T) is K_H(T, .)
    assert vals**2 @ part.widths == pytest.approx(1.0, rel=1e-2)


def test_adjoint_inverse_undoes_adjoint():
    grid = TimeGrid(1.0, 256)
    f = SampledFunction.from_callable(grid, lambda x: 1 + x**2)
    back = kernels.adjoint_op_inverse(kernels.adjoint_op(f, 0.7), 0.7)
    x = grid.nodes[1:-8]
    assert np.max(np.abs(back(x) - f(x))) < 2e-2


def test_kh_inverse_roundtrip():
    grid = TimeGrid(1.0, 256)
    phi = SampledFunction.from_callable(grid, lambda x: 1 + np.sin(2 * x), kind="step")
    back = kernels.kh_inverse(kernels.kh_operator(phi, 0.7), 0.7)
    x = grid.midpoints[4:]
    assert np.max(np.abs(back(x) - phi(x))) < 2e-2


def test_kernel_matrix_csv(tmp_path):
    km = kernels.volterra_kernel(0.7, TimeGrid(1.0, 4), levels=2)
    path = tmp_path / "k.csv"
    km.to_csv(path)
    assert path.read_text().count("\n") >= 5
