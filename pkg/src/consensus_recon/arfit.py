"""Lagged second moments and the autoregressive block estimator.

With the stacked state ``X(k) = [x(k), x(k-1), ..., x(k-m+1)]`` the
one-step-ahead regression ``x(k+1) ~ [B, CD, CED, ...] X(k)`` is solved
from the sample moments

    sigma0 = <X(k) X(k)^T>,    sigma1 = <x(k+1) X(k)^T>,

both averaged over the common window ``k = m-1 .. N_t-2``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, ConfigError, TrajectoryLengthError
from .network import DEFAULT_NOISE_STD, DynamicsMatrix

DEFAULT_N_LAGS = 3
DEFAULT_COND_THRESHOLD = 1e10
_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class LagCovariances:
    sigma0: np.ndarray
    sigma1: np.ndarray
    sigma_next: np.ndarray
    n_lags: int
    n_samples_used: int | None
    condition_estimate: float

    @property
    def n_followers(self):
        return self.sigma1.shape[0]

    @property
    def singular(self):
        return not np.isfinite(self.condition_estimate) or self.condition_estimate > DEFAULT_COND_THRESHOLD


def _condition(sigma0):
    if not np.any(sigma0):
        return float("inf")
    with np.errstate(divide="ignore", invalid="ignore"):
        c = float(np.linalg.cond(sigma0))
    return c if np.isfinite(c) else float("inf")


class _KahanSum:
    def __init__(self, shape):
        self.total = np.zeros(shape)
        self._comp = np.zeros(shape)

    def add(self, value):
        y = value - self._comp
        t = self.total + y
        self._comp = (t - self.total) - y
        self.total = t


def _as_array(traj):
    data = getattr(traj, "data", traj)
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    return data


def lag_covariances(traj, n_lags=DEFAULT_N_LAGS, chunk=_CHUNK) -> LagCovariances:
    """Accumulate the lag moments of a follower trajectory in one pass.

    ``traj`` is a :class:`~consensus_recon.simulate.Trajectory` or an
    ``(N_t, N_f)`` array.  Per-chunk products are combined with compensated
    summation.
    """
    x = _as_array(traj)
    m = int(n_lags)
    if m < 2:
        raise ConfigError(f"n_lags must be at least 2, got {n_lags}")
    n_t, nf = x.shape
    if n_t < m + 2:
        raise TrajectoryLengthError(f"trajectory has {n_t} rows; need at least {m + 2} for {m} lags")
    first, last = m - 1, n_t - 2
    width = last - first + 1
    dim = (m + 1) * nf
    acc = _KahanSum((dim, dim))
    for start in range(first, last + 1, chunk):
        stop = min(start + chunk, last + 1)
        # columns: x(k+1), x(k), x(k-1), ..., x(k-m+1)
        Z = np.hstack([x[start + 1 - lag: stop + 1 - lag] for lag in range(m + 1)])
        acc.add(Z.T @ Z)
    G = acc.total / width
    sigma_next = G[:nf, :nf]
    sigma1 = G[:nf, nf:]
    sigma0 = G[nf:, nf:]
    sigma0 = 0.5 * (sigma0 + sigma0.T)
    return LagCovariances(sigma0, sigma1, sigma_next, m, width, _condition(sigma0))


def population_lag_covariances(dm: DynamicsMatrix, noise_std=DEFAULT_NOISE_STD,
                               n_lags=DEFAULT_N_LAGS) -> LagCovariances:
    """Infinite-data limit of :func:`lag_covariances` for a stable system.

    Uses the stationary covariance from the discrete Lyapunov equation and
    the autocovariances ``Gamma(k) = (A^k P)`` restricted to followers.
    """
    A = dm.full
    nf = dm.n_followers
    Q = np.zeros_like(A)
    Q[:nf, :nf] = np.diag(np.broadcast_to(np.asarray(noise_std, float), (nf,)) ** 2)
    P = sla.solve_discrete_lyapunov(A, Q)
    gammas = []
    Ak = np.eye(A.shape[0])
    for _ in range(n_lags + 1):
        gammas.append((Ak @ P)[:nf, :nf])
        Ak = A @ Ak
    sigma0 = np.block([[gammas[b - a] if b >= a else gammas[a - b].T for b in range(n_lags)]
                       for a in range(n_lags)])
    sigma0 = 0.5 * (sigma0 + sigma0.T)
    sigma1 = np.hstack(gammas[1:])
    return LagCovariances(sigma0, sigma1, gammas[0], n_lags, None, _condition(sigma0))


@dataclass(frozen=True, eq=False)
class BlockEstimates:
    """Estimated regression blocks, lag 0 (B) first."""

    b_hat: np.ndarray
    cd_hat: np.ndarray
    ced_hat: np.ndarray | None
    higher: list = field(default_factory=list)
    residual_variance: np.ndarray | None = None
    stderr: np.ndarray | None = None
    n_lags: int = DEFAULT_N_LAGS
    n_samples_used: int | None = None
    condition_estimate: float = float("nan")
    ridge_lambda: float | None = None

    @property
    def n_followers(self):
        return self.b_hat.shape[0]

    @property
    def lag_blocks(self):
        blocks = [self.b_hat, self.cd_hat]
        if self.ced_hat is not None:
            blocks.append(self.ced_hat)
        return blocks + list(self.higher)

    @property
    def coefficients(self):
        return np.hstack(self.lag_blocks)

    @classmethod
    def from_blocks(cls, blocks, **meta):
        """Wrap known blocks ``[B, CD, CED, ...]``, e.g. exact ground truth."""
        blocks = [np.asarray(b, dtype=float) for b in blocks]
        return cls(blocks[0], blocks[1], blocks[2] if len(blocks) > 2 else None,
                   blocks[3:], n_lags=len(blocks), **meta)

    def to_dict(self):
        return {
            "n_lags": self.n_lags,
            "blocks": [b.tolist() for b in self.lag_blocks],
            "residual_variance": None if self.residual_variance is None else self.residual_variance.tolist(),
            "stderr": None if self.stderr is None else self.stderr.tolist(),
            "n_samples_used": self.n_samples_used,
            "condition_estimate": self.condition_estimate,
            "ridge_lambda": self.ridge_lambda,
        }

    @classmethod
    def from_dict(cls, d):
        opt = lambda v: None if v is None else np.asarray(v, dtype=float)  # noqa: E731
        return cls.from_blocks(
            d["blocks"],
            residual_variance=opt(d.get("residual_variance")),
            stderr=opt(d.get("stderr")),
            n_samples_used=d.get("n_samples_used"),
            condition_estimate=d.get("condition_estimate", float("nan")),
            ridge_lambda=d.get("ridge_lambda"),
        )

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def estimate_blocks(lc: LagCovariances, cond_threshold=DEFAULT_COND_THRESHOLD,
                    ridge=False, ridge_lambda=None) -> BlockEstimates:
    """Solve ``coef @ sigma0 = sigma1`` by Cholesky and split into lag blocks.

    When ``sigma0`` is ill-conditioned a :class:`ConditioningError` is raised
    unless ``ridge`` is set, in which case ``sigma0 + lambda I`` is used with
    ``lambda`` defaulting to ``1e-8 * trace(sigma0) / dim``.
    """
    S0 = lc.sigma0
    dim = S0.shape[0]
    nf = lc.n_followers
    lam = None
    if not np.isfinite(lc.condition_estimate) or lc.condition_estimate > cond_threshold:
        if not ridge:
            raise ConditioningError(lc.condition_estimate, cond_threshold)
        lam = float(ridge_lambda) if ridge_lambda is not None else 1e-8 * np.trace(S0) / dim
        if lam <= 0:
            raise ConditioningError(lc.condition_estimate, cond_threshold)
        S0 = S0 + lam * np.eye(dim)
    try:
        factor = sla.cho_factor(S0, lower=True)
    except np.linalg.LinAlgError:
        raise ConditioningError(lc.condition_estimate, cond_threshold) from None
    coef = sla.cho_solve(factor, lc.sigma1.T).T

    resid = (np.diag(lc.sigma_next) - 2.0 * np.sum(coef * lc.sigma1, axis=1)
             + np.sum((coef @ lc.sigma0) * coef, axis=1))
    resid = np.maximum(resid, 0.0)
    if lc.n_samples_used:
        # diag(S0^-1) from the inverse Cholesky factor; only used for error bars
        L_inv = sla.solve_triangular(np.tril(factor[0]), np.eye(dim), lower=True)
        inv_diag = np.sum(L_inv ** 2, axis=0)
        stderr = np.sqrt(np.outer(resid, inv_diag) / lc.n_samples_used)
    else:
        stderr = np.zeros_like(coef)

    blocks = [coef[:, k * nf:(k + 1) * nf] for k in range(lc.n_lags)]
    return BlockEstimates(
        b_hat=blocks[0],
        cd_hat=blocks[1],
        ced_hat=blocks[2] if lc.n_lags > 2 else None,
        higher=blocks[3:],
        residual_variance=resid,
        stderr=stderr,
        n_lags=lc.n_lags,
        n_samples_used=lc.n_samples_used,
        condition_estimate=lc.condition_estimate,
        ridge_lambda=lam,
    )


def fit(traj, n_lags=DEFAULT_N_LAGS, **kwargs) -> BlockEstimates:
    return estimate_blocks(lag_covariances(traj, n_lags), **kwargs)


@dataclass(frozen=True)
class TruncationReport:
    lag3_max: float
    lag1_max: float
    ratio: float
    threshold: float
    lag3_max_z: float
    flagged: bool


def truncation_residual_check(be: BlockEstimates, e_hat_magnitude) -> TruncationReport:
    """Compare the lag-3 block (estimating ``CE^2D``) with the lag-1 block.

    Under the three-lag truncation the ratio of their max-abs entries should
    be about ``|E|^2``; the report is flagged when it exceeds
    ``e_hat_magnitude ** 2``.  ``lag3_max_z`` is the largest lag-3 entry in
    units of its standard error.
    """
    if be.n_lags < 4:
        raise ConfigError("truncation check needs blocks estimated with n_lags >= 4")
    nf = be.n_followers
    lag1 = np.max(np.abs(be.cd_hat))
    lag3 = be.higher[0]
    lag3_max = float(np.max(np.abs(lag3)))
    ratio = lag3_max / lag1 if lag1 > 0 else float("inf")
    z = float("nan")
    if be.stderr is not None and np.all(be.stderr[:, 3 * nf:4 * nf] > 0):
        z = float(np.max(np.abs(lag3) / be.stderr[:, 3 * nf:4 * nf]))
    threshold = float(e_hat_magnitude) ** 2
    return TruncationReport(lag3_max, float(lag1), float(ratio), threshold, z, bool(ratio > threshold))
