"""Noisy iteration of the leader-follower coupled maps.

Only followers receive noise; leaders evolve deterministically.  Noise is
drawn from ``numpy.random.Generator(PCG64(seed))`` with
``Generator.standard_normal`` (ziggurat), one row of ``n_followers`` values
per step, so a run is bit-reproducible for a given seed on a given build.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError, SimulationDivergenceError, UnstableSystemError
from .network import DEFAULT_NOISE_STD, DynamicsMatrix, NetworkSpec, assemble, check_stability

DIVERGENCE_GUARD = 1e12
_CHUNK = 1 << 16
_MAGIC = b"CRTRAJ\x00\x01"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Follower-only time series, one row per map iteration."""

    data: np.ndarray
    seed: int | None = None
    spec_ref: str | None = None
    burn_in: int = 0

    def __post_init__(self):
        data = np.array(self.data, dtype=float, copy=True)
        if data.ndim != 2:
            raise ConfigError(f"trajectory data must be 2-D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def n_steps(self):
        return self.data.shape[0]

    @property
    def n_followers(self):
        return self.data.shape[1]

    def scaled(self, factor):
        return Trajectory(self.data * factor, self.seed, self.spec_ref, self.burn_in)

    # -- persistence -------------------------------------------------------
    def to_csv(self, path):
        header = ",".join(["t"] + [f"x{i + 1}" for i in range(self.n_followers)])
        t = np.arange(self.n_steps, dtype=float)[:, None]
        np.savetxt(path, np.hstack([t, self.data]), delimiter=",", header=header,
                   comments="", fmt=["%d"] + ["%.17g"] * self.n_followers)

    @classmethod
    def from_csv(cls, path):
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(raw[:, 1:])

    def to_binary(self, path):
        ref = (self.spec_ref or "").encode()
        seed = -1 if self.seed is None else int(self.seed)
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<QQqqI", self.n_steps, self.n_followers, seed, self.burn_in, len(ref)))
            fh.write(ref)
            fh.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            if fh.read(len(_MAGIC)) != _MAGIC:
                raise ConfigError(f"{path} is not a trajectory file")
            rows, cols, seed, burn_in, nref = struct.unpack("<QQqqI", fh.read(36))
            ref = fh.read(nref).decode() or None
            data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8").reshape(rows, cols)
        return cls(data, None if seed < 0 else seed, ref, burn_in)

    def save(self, path):
        if str(path).endswith(".csv"):
            self.to_csv(path)
        else:
            self.to_binary(path)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            head = fh.read(len(_MAGIC))
        return cls.from_binary(path) if head == _MAGIC else cls.from_csv(path)


def _check_state(x, step_index, guard=DIVERGENCE_GUARD):
    top = np.max(np.abs(x)) if x.size else 0.0
    if not np.isfinite(top) or top > guard:
        raise SimulationDivergenceError(step_index, top)


def step(dm: DynamicsMatrix, state, noise_draw, step_index=0):
    """One map iteration ``x' = A x + [noise; 0]``."""
    x = dm.full @ np.asarray(state, dtype=float)
    x[: dm.n_followers] += noise_draw
    _check_state(x, step_index)
    return x


@numba.njit(cache=True)
def _iterate(A, x, noise, out, guard):
    n, nf = A.shape[0], noise.shape[1]
    y = np.empty(n)
    for t in range(noise.shape[0]):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += A[i, j] * x[j]
            y[i] = acc
        for i in range(nf):
            y[i] += noise[t, i]
        for i in range(n):
            if not (abs(y[i]) <= guard):
                return t
        x[:] = y
        for i in range(nf):
            out[t, i] = x[i]
    return -1


def run(dm: DynamicsMatrix, n_steps, seed=None, noise_std=DEFAULT_NOISE_STD, burn_in=0,
        force=False, spec_ref=None, guard=DIVERGENCE_GUARD) -> Trajectory:
    """Iterate from the zero state and keep the follower coordinates.

    ``n_steps`` rows are returned after discarding ``burn_in`` leading rows;
    row 0 is the zero initial condition when ``burn_in == 0``.
    """
    n_steps, burn_in = int(n_steps), int(burn_in)
    if n_steps < 1 or burn_in < 0:
        raise ConfigError("n_steps must be positive and burn_in nonnegative")
    report = check_stability(dm)
    if not report.stable and not force:
        raise UnstableSystemError(report.spectral_radius)
    nf = dm.n_followers
    scale = np.broadcast_to(np.asarray(noise_std, dtype=float), (nf,))
    A = np.ascontiguousarray(dm.full)
    rng = np.random.default_rng(seed)
    total = n_steps + burn_in
    out = np.empty((total, nf))
    out[0] = 0.0
    x = np.zeros(A.shape[0])
    done = 1
    while done < total:
        k = min(_CHUNK, total - done)
        noise = rng.standard_normal((k, nf)) * scale
        bad = _iterate(A, x, noise, out[done:done + k], guard)
        if bad >= 0:
            y = A @ x
            y[:nf] += noise[bad]
            raise SimulationDivergenceError(done + bad, float(np.max(np.abs(y))))
        done += k
    return Trajectory(out[burn_in:], seed, spec_ref, burn_in)


def simulate(spec: NetworkSpec, n_steps, seed=None, burn_in=0, force=False) -> Trajectory:
    """Convenience wrapper: assemble ``spec`` and run with its noise levels."""
    return run(assemble(spec), n_steps, seed, spec.noise_std, burn_in, force, spec.identifier())


def lyapunov_covariance(dm: DynamicsMatrix, noise_std=DEFAULT_NOISE_STD, tol=1e-14, max_iter=1_000_000):
    """Stationary full-state covariance by fixed-point iteration of P <- A P A^T + Q."""
    A = dm.full
    nf = dm.n_followers
    Q = np.zeros_like(A)
    Q[:nf, :nf] = np.diag(np.broadcast_to(np.asarray(noise_std, float), (nf,)) ** 2)
    P = Q.copy()
    for _ in range(max_iter):
        P_next = A @ P @ A.T + Q
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P_next))):
            return P_next
        P = P_next
    raise UnstableSystemError(dm.spectral_radius, "Lyapunov iteration did not converge")
