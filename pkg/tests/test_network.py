import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensus_recon.errors import ConfigError, GenerationRejectedError
from consensus_recon.network import (
    DynamicsMatrix,
    NetworkSpec,
    assemble,
    check_stability,
    generate_paper_network,
)


def power_iteration_radius(A, n_iter=20000, seed=0):
    """Spectral radius from ||A^k v||^(1/k); independent of numpy.linalg.eigvals."""
    v = np.random.default_rng(seed).normal(size=A.shape[0])
    log_norm = 0.0
    for _ in range(n_iter):
        v = A @ v
        n = np.linalg.norm(v)
        log_norm += np.log(n)
        v /= n
    return float(np.exp(log_norm / n_iter))


def test_assemble_hand_example(tiny_spec):
    dm = assemble(tiny_spec)
    np.testing.assert_allclose(dm.B, [[0.5, 0.3], [0.4, 0.6]], atol=1e-15)
    np.testing.assert_allclose(dm.C, [[0.2], [0.0]], atol=1e-15)
    np.testing.assert_allclose(dm.D, [[0.25, 0.0]], atol=1e-15)
    np.testing.assert_allclose(dm.E, [[-0.25]], atol=1e-15)


def test_assemble_decoupled():
    spec = NetworkSpec(3, 1, np.zeros((4, 4)), alphas=[0.5])
    dm = assemble(spec)
    np.testing.assert_array_equal(dm.B, np.eye(3))
    assert not dm.C.any() and not dm.D.any()
    np.testing.assert_array_equal(dm.E, [[0.5]])


def test_assemble_leader_memory_reference_value():
    # alpha = 0.1 and in-degree 0.535246 give E = -0.435246
    w = np.zeros((3, 3))
    w[2, 0] = 0.3
    w[2, 1] = 0.235246
    w[0, 2] = 0.5
    dm = assemble(NetworkSpec(2, 1, w, alphas=[0.1]))
    assert dm.E[0, 0] == pytest.approx(-0.435246, abs=1e-12)


@st.composite
def random_specs(draw):
    nf = draw(st.integers(1, 6))
    nl = draw(st.integers(0, 3))
    n = nf + nl
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    w = rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.5)
    np.fill_diagonal(w, 0.0)
    return NetworkSpec(nf, nl, w, alphas=rng.uniform(-1, 1, nl))


@given(random_specs())
def test_row_sum_invariants(spec):
    dm = assemble(spec)
    follower = dm.B.sum(axis=1) + dm.C.sum(axis=1)
    leader = dm.D.sum(axis=1) + dm.E.sum(axis=1)
    assert np.max(np.abs(follower - 1.0), initial=0.0) < 1e-12
    assert np.max(np.abs(leader - spec.alphas), initial=0.0) < 1e-12
    off = dm.B - np.diag(np.diag(dm.B))
    assert np.all(off >= 0) and np.all(dm.C >= 0) and np.all(dm.D >= 0)
    np.testing.assert_allclose(np.diag(dm.E), spec.alphas - spec.leader_in_degree, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_generation_normalizes_max_in_degree(seed, n_leaders):
    spec = generate_paper_network(9, n_leaders, 0.6, rng_seed=seed, require_stable=False)
    assert spec.in_degree.max() == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diag(spec.weights) == 0)


def test_generation_keeps_only_large_entries():
    spec = generate_paper_network(9, 1, 0.6, rng_seed=4)
    w = spec.weights
    nz = w[w > 0]
    # all kept entries came from uniforms in (0.6, 1], rescaled by one common factor
    assert nz.max() / nz.min() < 1.0 / 0.6 + 1e-12


def test_empty_graph_edge_case():
    spec = generate_paper_network(2, 0, 1.0, rng_seed=0)
    assert not spec.weights.any()
    dm = assemble(spec)
    np.testing.assert_array_equal(dm.B, np.eye(2))


def test_symmetric_leader_coupling_properties():
    for seed in range(100):
        spec = generate_paper_network(10, 4, 0.8, True, rng_seed=seed, alphas=[0.2, 0.1, 0.05, 0.1])
        dm = assemble(spec)
        np.testing.assert_array_equal(dm.D, dm.C.T)
        assert not np.any(dm.E - np.diag(np.diag(dm.E)))
        # assumption (iii): no follower touches two leaders
        assert np.all((dm.C > 0).sum(axis=1) <= 1)
        assert np.all(dm.C.sum(axis=0) > 0)
        assert check_stability(dm).stable


def test_leader_coupling_required():
    for seed in range(20):
        spec = generate_paper_network(9, 1, 0.6, rng_seed=seed, alphas=[0.1])
        dm = assemble(spec)
        assert dm.C.sum() > 0 and dm.D.sum() > 0


def test_generation_gives_up_after_retries():
    # a single pair of followers cannot host four disjoint leaders
    with pytest.raises(GenerationRejectedError):
        generate_paper_network(2, 4, 0.5, True, rng_seed=0, max_retries=20)


def test_generation_is_deterministic():
    a = generate_paper_network(10, 4, 0.8, True, rng_seed=11)
    b = generate_paper_network(10, 4, 0.8, True, rng_seed=11)
    np.testing.assert_array_equal(a.weights, b.weights)


@pytest.mark.parametrize("bad", [
    dict(weights=-np.ones((3, 3)) + np.eye(3)),
    dict(weights=np.ones((3, 3))),
    dict(weights=np.zeros((2, 2))),
    dict(weights=np.zeros((3, 3)), alphas=[1.5]),
])
def test_spec_validation(bad):
    kwargs = dict(n_followers=2, n_leaders=1, weights=np.zeros((3, 3)), alphas=[0.0])
    kwargs.update(bad)
    with pytest.raises(ConfigError):
        NetworkSpec(**kwargs)


def test_stability_report_identity_is_marginal():
    dm = DynamicsMatrix(np.eye(3), np.zeros((3, 0)), np.zeros((0, 3)), np.zeros((0, 0)))
    report = check_stability(dm)
    assert report.spectral_radius == pytest.approx(1.0)
    assert not report.stable


def test_stability_of_recipe_instance_matches_power_iteration():
    spec = generate_paper_network(9, 1, 0.6, rng_seed=3, alphas=[0.1])
    dm = assemble(spec)
    rho = power_iteration_radius(dm.full)
    assert dm.spectral_radius == pytest.approx(rho, rel=1e-3)
    assert check_stability(dm).stable


def test_forced_instability():
    spec = generate_paper_network(9, 1, 0.6, rng_seed=3, alphas=[0.1])
    dm = assemble(spec)
    A = dm.full * (1.2 / dm.spectral_radius)
    nf = dm.n_followers
    scaled = DynamicsMatrix(A[:nf, :nf], A[:nf, nf:], A[nf:, :nf], A[nf:, nf:])
    report = check_stability(scaled)
    assert report.spectral_radius == pytest.approx(1.2)
    assert not report.stable


def test_json_round_trip(tmp_path):
    spec = generate_paper_network(10, 4, 0.8, True, rng_seed=5, alphas=[0.2, 0.1, 0.05, 0.1])
    path = tmp_path / "net.json"
    spec.to_json(path)
    doc = json.loads(path.read_text())
    assert set(doc) >= {"n_followers", "n_leaders", "weights", "alphas", "noise_std", "seed", "recipe"}
    back = NetworkSpec.from_json(path)
    np.testing.assert_array_equal(back.weights, spec.weights)
    np.testing.assert_array_equal(back.alphas, spec.alphas)
    np.testing.assert_array_equal(back.noise_std, spec.noise_std)
    assert back.identifier() == spec.identifier()


def test_spec_is_read_only():
    spec = generate_paper_network(9, 1, 0.6, rng_seed=0)
    with pytest.raises(ValueError):
        spec.weights[0, 1] = 3.0
