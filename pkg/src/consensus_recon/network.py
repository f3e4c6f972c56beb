"""Ground-truth leader-follower networks and their dynamics matrix.

Agents ``0..n_followers-1`` are the observed followers, the remaining
``n_leaders`` agents are the hidden leaders.  ``weights[i, j]`` is the
coupling strength of agent ``j`` onto agent ``i``, so the weighted in-degree
of agent ``i`` is the ``i``-th row sum.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, GenerationRejectedError

DEFAULT_NOISE_STD = 0.1


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Follower/leader network with leader parameters and follower noise levels."""

    n_followers: int
    n_leaders: int
    weights: np.ndarray
    alphas: np.ndarray | None = None
    noise_std: np.ndarray | float | None = None
    seed: int | None = None
    recipe: dict = field(default_factory=dict)

    def __post_init__(self):
        nf, nl = int(self.n_followers), int(self.n_leaders)
        if nf < 1 or nl < 0:
            raise ConfigError(f"need n_followers >= 1 and n_leaders >= 0, got {nf}, {nl}")
        n = nf + nl
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (n, n):
            raise ConfigError(f"weights must be {n}x{n}, got {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ConfigError("weights must be finite and nonnegative")
        if np.any(np.diag(w) != 0):
            raise ConfigError("weights must have a zero diagonal")
        alphas = np.zeros(nl) if self.alphas is None else np.atleast_1d(np.asarray(self.alphas, float))
        if alphas.shape != (nl,):
            raise ConfigError(f"expected {nl} leader alphas, got {alphas.shape[0]}")
        if np.any(np.abs(alphas) > 1):
            raise ConfigError("leader alphas must lie in [-1, 1]")
        noise = DEFAULT_NOISE_STD if self.noise_std is None else self.noise_std
        noise = np.broadcast_to(np.asarray(noise, dtype=float), (nf,))
        if np.any(noise < 0) or not np.all(np.isfinite(noise)):
            raise ConfigError("noise_std must be finite and nonnegative")
        object.__setattr__(self, "n_followers", nf)
        object.__setattr__(self, "n_leaders", nl)
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "alphas", _frozen(alphas))
        object.__setattr__(self, "noise_std", _frozen(noise))

    @property
    def n_agents(self):
        return self.n_followers + self.n_leaders

    @property
    def in_degree(self):
        return self.weights.sum(axis=1)

    @property
    def leader_in_degree(self):
        return self.in_degree[self.n_followers:]

    def with_alphas(self, alphas):
        return NetworkSpec(self.n_followers, self.n_leaders, self.weights, alphas,
                           self.noise_std, self.seed, dict(self.recipe))

    def memoryless(self):
        """Copy with every leader's alpha equal to its in-degree, so that E = 0."""
        return self.with_alphas(self.leader_in_degree)

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        return {
            "n_followers": self.n_followers,
            "n_leaders": self.n_leaders,
            "weights": self.weights.tolist(),
            "alphas": self.alphas.tolist(),
            "noise_std": self.noise_std.tolist(),
            "seed": self.seed,
            "recipe": self.recipe,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            n_followers=d["n_followers"],
            n_leaders=d["n_leaders"],
            weights=np.array(d["weights"], dtype=float).reshape(
                d["n_followers"] + d["n_leaders"], -1) if d["weights"] else np.zeros((0, 0)),
            alphas=d.get("alphas"),
            noise_std=d.get("noise_std"),
            seed=d.get("seed"),
            recipe=d.get("recipe") or {},
        )

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_json(cls, source):
        if isinstance(source, (str, Path)) and Path(source).exists():
            source = Path(source).read_text()
        return cls.from_dict(json.loads(source))

    def identifier(self):
        """Short content hash used to tie trajectories back to their network."""
        payload = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class DynamicsMatrix:
    """The block matrix ``A = [[B, C], [D, E]]`` of the coupled maps."""

    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    spectral_radius: float = float("nan")

    def __post_init__(self):
        B, C, D, E = (np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.B, self.C, self.D, self.E))
        nf = B.shape[0]
        nl = E.shape[0] if E.size else 0
        C = C.reshape(nf, nl)
        D = D.reshape(nl, nf)
        E = E.reshape(nl, nl)
        for name, m in zip("BCDE", (B, C, D, E)):
            object.__setattr__(self, name, _frozen(m))
        if np.isnan(self.spectral_radius):
            rho = float(np.max(np.abs(np.linalg.eigvals(self.full)))) if self.full.size else 0.0
            object.__setattr__(self, "spectral_radius", rho)

    @property
    def n_followers(self):
        return self.B.shape[0]

    @property
    def n_leaders(self):
        return self.E.shape[0]

    @property
    def full(self):
        return np.block([[self.B, self.C], [self.D, self.E]])

    def memory_blocks(self, count):
        """Return ``[CD, CED, CE^2D, ...]`` with ``count`` entries."""
        out = []
        left = self.C
        for _ in range(count):
            out.append(left @ self.D)
            left = left @ self.E
        return out

    def truncated_blocks(self):
        """``(B, CD, CED)``: the exact coefficients kept by the three-lag model."""
        cd, ced = self.memory_blocks(2)
        return self.B.copy(), cd, ced

    @property
    def leader_alphas(self):
        return self.D.sum(axis=1) + self.E.sum(axis=1)


@dataclass(frozen=True)
class StabilityReport:
    spectral_radius: float
    stable: bool
    margin: float


def assemble(spec: NetworkSpec) -> DynamicsMatrix:
    """Build the dynamics matrix of the coupled maps for ``spec``.

    Off-diagonal entries are the couplings themselves; the diagonal is
    ``1 - kappa_i`` for followers and ``alpha_i - kappa_i`` for leaders.
    """
    nf = spec.n_followers
    A = np.array(spec.weights)
    kappa = A.sum(axis=1)
    A[np.diag_indices_from(A)] = np.concatenate([np.ones(nf), spec.alphas]) - kappa
    return DynamicsMatrix(A[:nf, :nf], A[:nf, nf:], A[nf:, :nf], A[nf:, nf:])


def check_stability(dm: DynamicsMatrix, margin: float = 1e-6) -> StabilityReport:
    rho = float(dm.spectral_radius)
    return StabilityReport(rho, rho < 1.0 - margin, margin)


def _rejection_reason(K, nf, nl, disjoint):
    C = K[:nf, nf:]
    D = K[nf:, :nf]
    if nl and np.any(C.sum(axis=0) == 0):
        return "a leader has no coupling onto any follower"
    if nl and np.any(D.sum(axis=1) == 0):
        return "a leader receives no coupling from any follower"
    if disjoint and nl > 1:
        touched = (C > 0) | (D.T > 0)
        if np.any(touched.sum(axis=1) > 1):
            return "two leaders share a follower"
    return None


def generate_paper_network(
    n_followers,
    n_leaders=0,
    keep_threshold=0.6,
    symmetric_leader_coupling=False,
    rng_seed=None,
    *,
    alphas=None,
    noise_std=DEFAULT_NOISE_STD,
    disjoint_leaders=None,
    require_stable=True,
    max_retries=1000,
    margin=1e-6,
) -> NetworkSpec:
    """Draw a random directed network with the thresholded-uniform recipe.

    An ``N x N`` matrix of uniform numbers is drawn, the diagonal ignored and
    only entries above ``keep_threshold`` kept.  All weights are then divided
    by the largest weighted in-degree (the largest Laplacian diagonal), so
    the maximum in-degree is 1.  With ``symmetric_leader_coupling`` the
    leader-onto-follower block is replaced by the transpose of the
    follower-onto-leader block and leader-leader couplings are removed; this
    is done before normalizing.

    Draws where a leader is not coupled both to and from the followers, where
    two leaders share a follower (when ``disjoint_leaders``, which defaults to
    ``symmetric_leader_coupling``), or where the system with the given
    ``alphas`` is not stable are rejected and redrawn, up to ``max_retries``
    times.  Stability is only required when there are leaders, since a
    leaderless consensus network always keeps its marginal consensus mode.
    """
    nf, nl = int(n_followers), int(n_leaders)
    if nf < 2 or nl < 0:
        raise ConfigError("need n_followers >= 2 and n_leaders >= 0")
    if not 0.0 < keep_threshold <= 1.0:
        raise ConfigError(f"keep_threshold must lie in (0, 1], got {keep_threshold}")
    if disjoint_leaders is None:
        disjoint_leaders = bool(symmetric_leader_coupling)
    alphas = np.zeros(nl) if alphas is None else np.atleast_1d(np.asarray(alphas, float))
    n = nf + nl
    rng = np.random.default_rng(rng_seed)
    recipe = {
        "name": "thresholded-uniform",
        "keep_threshold": keep_threshold,
        "symmetric_leader_coupling": bool(symmetric_leader_coupling),
        "disjoint_leaders": bool(disjoint_leaders),
    }
    reason = None
    for attempt in range(max_retries + 1):
        U = rng.uniform(0.0, 1.0, size=(n, n))
        np.fill_diagonal(U, 0.0)
        K = np.where(U > keep_threshold, U, 0.0)
        if symmetric_leader_coupling and nl:
            K[:nf, nf:] = K[nf:, :nf].T
            K[nf:, nf:] = 0.0
        top = K.sum(axis=1).max()
        if top > 0:
            K = K / top
        reason = _rejection_reason(K, nf, nl, disjoint_leaders)
        if reason is None:
            spec = NetworkSpec(nf, nl, K, alphas, noise_std, rng_seed,
                               dict(recipe, attempts=attempt + 1))
            if not (require_stable and nl):
                return spec
            report = check_stability(assemble(spec), margin)
            if report.stable:
                return spec
            reason = f"unstable draw (spectral radius {report.spectral_radius:.6f})"
    raise GenerationRejectedError(
        f"no acceptable network after {max_retries} retries; last rejection: {reason}"
    )
