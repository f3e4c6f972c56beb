"""Full reconstruction with a single hidden leader.

The leader-onto-follower column ``C`` closes the Laplacian row sums of
``B``, ``D`` follows from the rank-one factorization of ``CD`` and the
scalar leader memory ``E`` from the entrywise ratio ``CED / CD``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .arfit import BlockEstimates
from .errors import NoLeaderError, ThresholdTooHighError

DEFAULT_RELATIVE_THRESHOLD = 0.25
# Couplings are normalized so the largest in-degree is 1; row-sum defects
# below this are treated as estimation noise.
DEFAULT_MIN_COUPLING = 1e-2
WINSORIZE_MIN_SUPPORT = 20


def resolve_threshold(values, threshold=None, relative=DEFAULT_RELATIVE_THRESHOLD, floor=0.0):
    """Absolute threshold if given, else ``relative * max |values|``, never below ``floor``."""
    if threshold is not None:
        return float(threshold)
    top = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return max(relative * top, floor)


def recover_c(b_hat, threshold=None, relative=DEFAULT_RELATIVE_THRESHOLD, floor=DEFAULT_MIN_COUPLING):
    """Leader coupling ``C_i = 1 - sum_j B_ij``, with small entries set to zero."""
    c = 1.0 - np.asarray(b_hat, dtype=float).sum(axis=1)
    thr = resolve_threshold(np.maximum(c, 0.0), threshold, relative, floor)
    c = np.where(c > thr, c, 0.0)
    if not np.any(c):
        raise NoLeaderError(
            "follower rows of B already sum to one: no coupling to a hidden leader detected"
        )
    return c


def recover_d(c_hat, cd_hat):
    """Least-squares ``D`` from ``C D = CD``; returns ``(d_hat, residual_norm)``."""
    c = np.asarray(c_hat, dtype=float)
    norm2 = float(c @ c)
    if norm2 == 0.0:
        raise NoLeaderError("cannot separate D from CD with a zero C")
    d = c @ cd_hat / norm2
    residual = float(np.linalg.norm(np.outer(c, d) - cd_hat))
    return d, residual


def recover_e_scalar(cd_hat, ced_hat, threshold=None, relative=DEFAULT_RELATIVE_THRESHOLD):
    """Mean of ``CED_ij / CD_ij`` over the entries where ``|CD_ij|`` exceeds the threshold.

    Returns ``(e_hat, e_hat_std, support_size, threshold_used, e_hat_winsorized)``;
    the winsorized mean clips ratios to their 5th/95th percentiles and is only
    computed when the support has at least 20 entries.
    """
    cd_hat = np.asarray(cd_hat, dtype=float)
    thr = resolve_threshold(cd_hat, threshold, relative)
    support = np.abs(cd_hat) > thr
    if not np.any(support):
        raise ThresholdTooHighError(f"no entry of CD exceeds the threshold {thr:.3g}")
    ratios = np.asarray(ced_hat, dtype=float)[support] / cd_hat[support]
    wins = None
    if ratios.size >= WINSORIZE_MIN_SUPPORT:
        lo, hi = np.percentile(ratios, [5, 95])
        wins = float(np.mean(np.clip(ratios, lo, hi)))
    return float(ratios.mean()), float(ratios.std()), int(ratios.size), thr, wins


def recover_alpha(e_hat, d_hat):
    return float(e_hat + np.sum(d_hat))


@dataclass(frozen=True, eq=False)
class SingleLeaderResult:
    c_hat: np.ndarray
    d_hat: np.ndarray
    e_hat: float
    e_hat_std: float
    alpha_hat: float
    support_set_size: int
    threshold_used: float
    c_threshold_used: float
    d_residual: float
    e_hat_winsorized: float | None = None

    @property
    def C(self):
        return self.c_hat[:, None]

    @property
    def D(self):
        return self.d_hat[None, :]

    @property
    def E(self):
        return np.array([[self.e_hat]])

    @property
    def alphas(self):
        return np.array([self.alpha_hat])

    def to_dict(self):
        d = asdict(self)
        d["c_hat"] = self.c_hat.tolist()
        d["d_hat"] = self.d_hat.tolist()
        d["kind"] = "single"
        return d

    @classmethod
    def from_dict(cls, d):
        d = {k: v for k, v in d.items() if k != "kind"}
        d["c_hat"] = np.asarray(d["c_hat"], dtype=float)
        d["d_hat"] = np.asarray(d["d_hat"], dtype=float)
        return cls(**d)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def recover_single(be: BlockEstimates, threshold=None, relative=DEFAULT_RELATIVE_THRESHOLD,
                   c_threshold=None, c_floor=DEFAULT_MIN_COUPLING) -> SingleLeaderResult:
    """Reconstruct ``C``, ``D``, ``E`` and the leader's alpha from lag blocks.

    ``threshold`` selects the support of ``CD`` used for the memory ratio
    (default ``relative * max |CD|``); ``c_threshold`` clamps ``C`` the same
    way, with an absolute floor ``c_floor``.
    """
    if be.ced_hat is None:
        raise ValueError("single-leader recovery needs blocks estimated with n_lags >= 3")
    c_thr = resolve_threshold(np.maximum(1.0 - be.b_hat.sum(axis=1), 0.0), c_threshold, relative, c_floor)
    c = recover_c(be.b_hat, threshold=c_thr)
    d, resid = recover_d(c, be.cd_hat)
    e, e_std, m, thr, wins = recover_e_scalar(be.cd_hat, be.ced_hat, threshold, relative)
    return SingleLeaderResult(c, d, e, e_std, recover_alpha(e, d), m, thr, c_thr, resid, wins)
