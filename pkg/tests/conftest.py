import numpy as np
import pytest

from consensus_recon.network import NetworkSpec

# (criterion, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES = []


def record(criterion, passed, detail):
    line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def tiny_spec():
    """2 followers + 1 leader; hand-checked dynamics matrix."""
    w = np.zeros((3, 3))
    w[0, 1] = 0.3
    w[0, 2] = 0.2
    w[1, 0] = 0.4
    w[2, 0] = 0.25
    return NetworkSpec(2, 1, w, alphas=[0.0])


def synthesize_ar(blocks, n_steps, seed, noise_std=0.1):
    """x(t+1) = sum_k blocks[k] x(t-k) + noise, from zero initial conditions."""
    nf = blocks[0].shape[0]
    m = len(blocks)
    noise = np.random.default_rng(seed).normal(0.0, noise_std, size=(n_steps + m, nf))
    x = np.zeros((n_steps + m, nf))
    coef = np.hstack(blocks)
    for t in range(m, n_steps + m - 1):
        x[t + 1] = coef @ x[t - m + 1:t + 1][::-1].ravel() + noise[t]
    return x[m:]
