import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from rosenblatt_girsanov import SampledFunction, TimeGrid, kernels
from rosenblatt_girsanov.grid import NoisePartition
from rosenblatt_girsanov.simulate import (
    RosenblattSimulator,
    WienerIncrements,
    fbm_path,
    gen_increments,
    recover_wiener,
    rosenblatt_path,
    simulate_bundle,
    wiener_integral_fbm,
)


@pytest.fixture(scope="module")
def grid():
    return TimeGrid(1.0, 64)


def test_partition_layout(grid):
    part = NoisePartition(grid, 5)
    assert part.size == 69
    assert part.edges[0] == 0 and part.edges[-1] == 1.0
    assert part.widths[:6].sum() == pytest.approx(grid.dt)
    np.testing.assert_allclose(part.aggregate(part.widths), np.full(64, grid.dt))


def test_batch_rows_equal_single_draws(grid):
    batch = gen_increments(grid, 7, [3, 11])
    one = gen_increments(grid, 7, 11)
    np.testing.assert_array_equal(batch.noise[1], one.noise)
    assert batch.batch and not one.batch
    assert len(batch) == 2


def test_streams_and_seeds_differ(grid):
    a = gen_increments(grid, 1, 0).noise
    assert not np.allclose(a, gen_increments(grid, 2, 0).noise)
    assert not np.allclose(a, gen_increments(grid, 1, 0, stream=1).noise)


def test_increment_variance():
    grid = TimeGrid(1.0, 16)
    w = gen_increments(grid, 0, np.arange(20000))
    # first grid cell keeps variance dt after the bridge split
    np.testing.assert_allclose(w.dB.var(axis=0), grid.dt, rtol=0.05)
    inner = w.noise[:, 0]
    assert inner.var() == pytest.approx(w.partition.widths[0], rel=0.05)


def test_coarsen_keeps_the_path():
    fine = gen_increments(TimeGrid(1.0, 64), 3, [0, 1])
    coarse = fine.coarsen(4)
    assert coarse.grid.n == 16
    np.testing.assert_allclose(coarse.wiener_path(), fine.wiener_path()[:, ::4], atol=1e-12)
    with pytest.raises(ValueError):
        fine.coarsen(3)


def test_wrong_noise_size(grid):
    with pytest.raises(ValueError):
        WienerIncrements(NoisePartition(grid), np.zeros(10))


def test_fbm_covariance_empirical():
    grid = TimeGrid(1.0, 32)
    w = gen_increments(grid, 5, np.arange(8000))
    B = fbm_path(w, 0.7)
    emp = np.cov(B[:, [16, 32]].T)
    exact = kernels.fbm_covariance(np.array([[0.5, 0.5], [1, 1]]), np.array([[0.5, 1], [0.5, 1]]), 0.7)
    np.testing.assert_allclose(emp, exact, atol=0.05)


def test_rosenblatt_path_mean_and_start():
    grid = TimeGrid(1.0, 32)
    R = rosenblatt_path(gen_increments(grid, 4, np.arange(8000)), 0.7)
    assert np.all(R[:, 0] == 0)
    assert abs(R[:, -1].mean()) < 4 * R[:, -1].std() / np.sqrt(8000)
    # Rosenblatt marginals are skewed to the right
    m = R[:, -1] - R[:, -1].mean()
    assert np.mean(m**3) > 0


def test_rosenblatt_single_matches_batch(grid):
    batch = rosenblatt_path(gen_increments(grid, 9, [0, 1]), 0.8)
    single = rosenblatt_path(gen_increments(grid, 9, 1), 0.8)
    np.testing.assert_allclose(batch[1], single, rtol=1e-12)
    with pytest.raises(ValueError):
        rosenblatt_path(gen_increments(grid, 9, 1), 0.8, TimeGrid(1.0, 32))


@settings(max_examples=10, deadline=None)
@given(c=st.floats(-3, 3))
def test_wiener_integral_of_constant_is_scaled_fbm(c):
    grid = TimeGrid(1.0, 32)
    w = gen_increments(grid, 1, 0)
    f = SampledFunction.constant(grid, c)
    got = wiener_integral_fbm(f, w, 0.7, upto="nodes")
    np.testing.assert_allclose(got, c * fbm_path(w, 0.7), atol=2e-2 * max(1.0, abs(c)))


def test_wiener_integral_upto(grid):
    w = gen_increments(grid, 1, 0)
    f = SampledFunction.constant(grid)
    assert wiener_integral_fbm(f, w, 0.7) == pytest.approx(wiener_integral_fbm(f, w, 0.7, "nodes")[-1])
    with pytest.raises(ValueError):
        wiener_integral_fbm(f, w, 0.7, upto="half")


def test_recover_wiener_single_path():
    grid = TimeGrid(1.0, 256)
    w = gen_increments(grid, 2, 0)
    B = w.wiener_path()
    got = recover_wiener(fbm_path(w, 0.75), 0.75, grid)
    assert got[0] == 0
    assert np.sqrt(np.sum((got - B) ** 2) / np.sum(B**2)) < 0.1
    with pytest.raises(ValueError):
        recover_wiener(np.zeros(10), 0.75, grid)


def test_bundle_csv(tmp_path):
    grid = TimeGrid(1.0, 8)
    b = simulate_bundle(0.7, grid, 0, [0, 1], levels=3)
    p = tmp_path / "paths.csv"
    b.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "path_index,t,B,B_fbm,R"
    assert len(lines) == 1 + 2 * 9


def test_simulator_estimator():
    est = RosenblattSimulator(H=0.7, n=32, levels=4, seed=3).fit()
    X = est.sample(3)
    R = est.transform(X)
    np.testing.assert_allclose(R, rosenblatt_path(gen_increments(TimeGrid(1, 32), 3, [0, 1, 2], 4), 0.7))
    assert clone(est).get_params()["H"] == 0.7
    fb = RosenblattSimulator(H=0.7, n=32, levels=4, output="fbm").fit_transform(X)
    assert fb.shape == (3, 33)
    with pytest.raises(ValueError):
        est.transform(X[:, :-1])
