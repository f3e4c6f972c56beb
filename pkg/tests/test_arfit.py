import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_recon import arfit
from consensus_recon.arfit import (
    BlockEstimates,
    estimate_blocks,
    fit,
    lag_covariances,
    population_lag_covariances,
    truncation_residual_check,
)
from consensus_recon.errors import ConditioningError, ConfigError, TrajectoryLengthError
from consensus_recon.network import NetworkSpec, assemble, generate_paper_network
from consensus_recon.recipes import FIG1
from consensus_recon.simulate import lyapunov_covariance, run, simulate

from conftest import synthesize_ar


@pytest.fixture(scope="module")
def fig1_dm():
    return assemble(generate_paper_network(9, 1, 0.6, rng_seed=1, alphas=[0.1]))


@pytest.fixture(scope="module")
def fig1_traj(fig1_dm):
    return run(fig1_dm, 1_000_000, seed=3)


def test_hand_moments():
    lc = lag_covariances(np.array([0.0, 1.0, 2.0, 1.0, 0.0]), n_lags=3)
    np.testing.assert_allclose(lc.sigma0, [[2.5, 2.0, 0.5], [2.0, 2.5, 1.0], [0.5, 1.0, 0.5]], atol=1e-15)
    np.testing.assert_allclose(lc.sigma1, [[1.0, 0.5, 0.0]], atol=1e-15)
    assert lc.n_samples_used == 2


def test_moments_match_direct_sums():
    x = np.random.default_rng(0).normal(size=(3000, 3))
    m = 3
    lc = lag_covariances(x, m, chunk=257)
    X = np.hstack([x[m - 1 - lag: len(x) - 1 - lag] for lag in range(m)])
    Y = x[m:]
    np.testing.assert_allclose(lc.sigma0, X.T @ X / len(Y), atol=1e-13)
    np.testing.assert_allclose(lc.sigma1, Y.T @ X / len(Y), atol=1e-13)


def test_zero_trajectory_is_singular():
    lc = lag_covariances(np.zeros((100, 3)))
    assert lc.singular
    with pytest.raises(ConditioningError):
        estimate_blocks(lc)


def test_ridge_fallback_is_reported():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(5000, 1)) @ np.ones((1, 3))
    lc = lag_covariances(x)
    assert lc.singular
    be = estimate_blocks(lc, ridge=True)
    assert be.ridge_lambda > 0
    assert np.all(np.isfinite(be.coefficients))


def test_length_and_lag_validation():
    with pytest.raises(TrajectoryLengthError):
        lag_covariances(np.ones((4, 2)), n_lags=3)
    with pytest.raises(ConfigError):
        lag_covariances(np.ones((40, 2)), n_lags=1)


def test_population_moments_agree_with_fixed_point_oracle(fig1_dm):
    lc = population_lag_covariances(fig1_dm, 0.1, 3)
    P = lyapunov_covariance(fig1_dm, 0.1)
    np.testing.assert_allclose(lc.sigma0[:9, :9], P[:9, :9], atol=1e-12)
    AP = fig1_dm.full @ P
    np.testing.assert_allclose(lc.sigma1[:, :9], AP[:9, :9], atol=1e-12)


def test_population_blocks_converge_to_truth_without_memory():
    dm = assemble(generate_paper_network(9, 1, 0.6, rng_seed=1, alphas=[0.1]).memoryless())
    be = estimate_blocks(population_lag_covariances(dm, 0.1, 3))
    B, CD, CED = dm.truncated_blocks()
    np.testing.assert_allclose(be.b_hat, B, atol=1e-9)
    np.testing.assert_allclose(be.cd_hat, CD, atol=1e-9)
    np.testing.assert_allclose(be.ced_hat, 0.0, atol=1e-9)


def test_sample_moments_match_population(fig1_dm, fig1_traj):
    sample = lag_covariances(fig1_traj).sigma0[:9, :9]
    pop = population_lag_covariances(fig1_dm).sigma0[:9, :9]
    assert np.abs(np.diag(sample) / np.diag(pop) - 1.0).max() < 0.03


def test_leaderless_system_recovers_b():
    w = np.zeros((4, 4))
    w[0, 1], w[1, 2], w[2, 0], w[2, 1] = 0.5, 0.4, 0.3, 0.3
    # a follower with no leader is marginally stable; add a self-decay via a memoryless leader
    w[0, 3] = 0.2
    spec = NetworkSpec(3, 1, w, alphas=[0.0])
    dm = assemble(spec)
    assert not dm.D.any()
    be = fit(simulate(spec, 1_000_000, seed=0))
    assert np.abs(be.b_hat - dm.B).max() < 0.01
    assert np.abs(be.cd_hat).max() < 0.01


def test_synthetic_ar3_recovery(fig1_dm):
    blocks = fig1_dm.truncated_blocks()
    x = synthesize_ar(blocks, 200_000, seed=2)
    be = fit(x)
    for est, true in zip(be.lag_blocks, blocks):
        assert np.abs(est - true).max() < 0.03


@settings(max_examples=10, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_scale_invariance(factor):
    x = np.random.default_rng(4).normal(size=(2000, 3)).cumsum(axis=0) * 0.01
    x -= x.mean(axis=0)
    a = fit(x).coefficients
    b = fit(x * factor).coefficients
    np.testing.assert_allclose(a, b, atol=1e-10)


def test_estimate_is_deterministic(fig1_traj):
    a = fit(fig1_traj).coefficients
    b = fit(fig1_traj).coefficients
    assert np.array_equal(a, b)


def test_stderr_shrinks_with_data(fig1_dm):
    small = fit(run(fig1_dm, 10_000, seed=1))
    big = fit(run(fig1_dm, 160_000, seed=1))
    ratio = np.median(small.stderr / big.stderr)
    assert ratio == pytest.approx(4.0, rel=0.1)


def test_residual_variance_matches_noise(fig1_traj):
    be = fit(fig1_traj)
    # the truncated lags leave a small excess over the innovation variance
    np.testing.assert_allclose(be.residual_variance, 0.01, rtol=0.05)


def test_block_estimates_json_round_trip(tmp_path, fig1_traj):
    be = fit(fig1_traj.data[:20_000])
    path = tmp_path / "blocks.json"
    be.to_json(path)
    back = BlockEstimates.from_dict(json.loads(path.read_text()))
    np.testing.assert_array_equal(back.coefficients, be.coefficients)
    assert back.n_lags == 3


def test_truncation_check_population_memoryless():
    dm = assemble(generate_paper_network(9, 1, 0.6, rng_seed=1, alphas=[0.1]).memoryless())
    be = estimate_blocks(population_lag_covariances(dm, 0.1, 4))
    rep = truncation_residual_check(be, 0.0)
    assert rep.ratio < 0.02


def test_truncation_check_sample_memoryless_is_noise():
    dm = assemble(generate_paper_network(9, 1, 0.6, rng_seed=1, alphas=[0.1]).memoryless())
    be = fit(run(dm, 1_000_000, seed=8), n_lags=4)
    rep = truncation_residual_check(be, 0.0)
    assert rep.lag3_max_z < 5.0


def test_truncation_check_with_memory():
    dm = assemble(FIG1.draw(0))
    e = abs(dm.E[0, 0])
    # the lag-3 block estimates C E^2 D, so the ratio is of order E^2
    pop = truncation_residual_check(estimate_blocks(population_lag_covariances(dm, 0.1, 4)), e)
    assert 0.5 * e ** 2 < pop.ratio < 2 * e ** 2
    rep = truncation_residual_check(fit(run(dm, 1_000_000, seed=0), n_lags=4), e)
    assert rep.lag3_max_z > 4.0
    assert rep.ratio == pytest.approx(pop.ratio, abs=0.06)


def test_truncation_check_requires_four_lags(fig1_traj):
    with pytest.raises(ConfigError):
        truncation_residual_check(fit(fig1_traj.data[:5000]), 0.4)


def test_default_lag_count():
    assert arfit.DEFAULT_N_LAGS == 3
