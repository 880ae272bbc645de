import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from rosenblatt_girsanov import TimeGrid
from rosenblatt_girsanov import girsanov as gs
from rosenblatt_girsanov.verify import (
    McConfig,
    bonferroni_k,
    covariance_compare,
    default_test_functions,
    ess,
    run_mc,
    weighted_covariance,
    weighted_moment,
)


def test_ess_bounds():
    assert ess(np.ones(50)) == pytest.approx(50)
    assert ess(np.r_[1.0, np.zeros(9)]) == pytest.approx(1)
    with pytest.raises(ValueError):
        ess([1.0, -1.0])
    with pytest.raises(ValueError):
        ess([])


@settings(max_examples=30, deadline=None)
@given(w=st.lists(st.floats(1e-3, 10), min_size=2, max_size=40))
def test_ess_between_one_and_n(w):
    e = ess(w)
    assert 1 - 1e-9 <= e <= len(w) + 1e-9


@settings(max_examples=30, deadline=None)
@given(c=st.floats(1e-3, 1e3))
def test_weighted_moment_scale_invariant(c):
    rng = np.random.default_rng(0)
    x = rng.normal(size=200)
    w = rng.uniform(0.1, 2, size=200)
    assert weighted_moment(x, w) == pytest.approx(weighted_moment(x, c * w))


def test_weighted_moment_equal_weights_is_sample_mean():
    x = np.arange(10.0)
    est, se = weighted_moment(x, np.ones(10))
    assert est == pytest.approx(4.5)
    assert se == pytest.approx(np.std(x) / np.sqrt(10))
    with pytest.raises(ValueError):
        weighted_moment(x, np.ones(9))


def test_importance_weights_recover_shifted_mean():
    # N(0,1) sample reweighted by exp(x - 1/2) targets N(1,1)
    x = np.random.default_rng(1).normal(size=200000)
    est, se = weighted_moment(x, np.exp(x - 0.5))
    assert abs(est - 1) < 4 * se


def test_weighted_covariance_matches_numpy():
    X = np.random.default_rng(2).normal(size=(5000, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.2], [0, 0, 1]])
    cov, se = weighted_covariance(X, np.ones(5000))
    np.testing.assert_allclose(cov, np.cov(X.T, ddof=0), atol=1e-12)
    assert np.all(se > 0) and np.all(se < 0.1)


def test_covariance_compare_upper_triangle():
    c = np.eye(3)
    s = np.full((3, 3), 0.1)
    out = covariance_compare((c, s), (c + 0.5, s), k=3)
    assert len(out) == 6
    assert all(not x.verdict for x in out)
    assert all(x.verdict for x in covariance_compare((c, s), (c + 0.4, s), k=3))
    with pytest.raises(ValueError):
        covariance_compare((c, s), (np.eye(2), s[:2, :2]), k=3)


def test_bonferroni():
    assert bonferroni_k(3.0, 1) == 3.0
    k = bonferroni_k(3.0, 32)
    assert 2 * stats.norm.sf(k) * 32 == pytest.approx(2 * stats.norm.sf(3.0))
    assert 3.0 < k < bonferroni_k(3.0, 64)


def test_default_test_functions_count():
    names = ["a", "b", "c", "d"]
    fns = default_test_functions(names)
    assert len(fns) == 4 + 4 + 6 + 8
    X = np.arange(8.0).reshape(2, 4)
    assert dict(fns)["product[a,c]"](X).tolist() == [0.0, 24.0]


def test_config_validation():
    for bad in (dict(N=10), dict(k=0), dict(construction="x"), dict(checkpoints=(0.3,)), dict(H=0.4)):
        with pytest.raises(ValueError):
            McConfig(**bad).checkpoint_nodes()


def test_run_mc_zero_shift_small():
    rep = run_mc(McConfig(H=0.7, n=64, N=2000, shift="zero", seed=3))
    assert rep.mean_Z == 1.0 and rep.martingale_ok
    assert rep.ess == pytest.approx(2000)
    assert rep.passed
    # with no shift the unweighted comparison is the same test and passes too
    assert not rep.sensitivity_detects


def test_run_mc_power_shift_small(tmp_path):
    rep = run_mc(McConfig(H=0.7, n=64, N=4000, shift="power:0", seed=1))
    assert rep.passed
    assert rep.sensitivity_detects
    rep.to_csv(tmp_path / "r.csv")
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "name,estimate,SE,oracle,oracle_SE,verdict"
    assert "overall: PASS" in rep.summary()


def test_run_mc_tilde_construction():
    rep = run_mc(McConfig(H=0.7, n=64, N=2000, shift="power:0", construction="tilde"))
    assert rep.passed


def test_degenerate_weights_suppress_verdicts():
    grid = TimeGrid(1.0, 64)
    big = gs.power_shift(grid, 0.7, 0.0)
    spec = gs.phi_from_theta(big.theta * 8.0, 0.7, "power x8")
    rep = run_mc(McConfig(H=0.7, n=64, N=1000, shift=spec))
    assert rep.degenerate
    assert rep.passed is None and rep.tests_ok is None
    assert "degeneracy" in rep.summary()
