"""Reconstruction with several hidden leaders.

Requires leaders that do not interact with each other (diagonal ``E``),
couple symmetrically to the followers (``D = C^T``) and never share a
follower.  Then ``CD = C C^T`` is block diagonal up to a permutation and each
leader's column of ``C`` is read off from one column of ``C C^T``.  Leader
identities are only defined up to a permutation.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import connected_components

from .arfit import BlockEstimates
from .errors import AssumptionWarning, DegenerateCouplingError, NoLeaderError
from .single_recovery import DEFAULT_RELATIVE_THRESHOLD

DEFAULT_NORM_THRESHOLD = 0.1
DEFAULT_COSINE_TOLERANCE = 0.05
NEGATIVE_TOLERANCE = 1e-12


def group_dependent_columns(cct_hat, norm_threshold=DEFAULT_NORM_THRESHOLD,
                            cosine_tolerance=DEFAULT_COSINE_TOLERANCE, relative=True, symmetrize=True):
    """Cluster the (numerically) linearly dependent columns of ``C C^T``.

    Columns whose norm is below ``norm_threshold`` (times the largest column
    norm when ``relative``) are dropped.  Two surviving columns are linked
    when their absolute cosine similarity exceeds ``1 - cosine_tolerance``;
    clusters are the connected components of that graph, sorted by the norm
    of their largest column.  Returns ``(clusters, cosines)``.

    ``symmetrize=False`` skips the initial symmetrization, which lets the
    same grouping count leaders in a non-symmetric ``CD`` estimate.
    """
    S = np.asarray(cct_hat, dtype=float)
    if symmetrize:
        S = 0.5 * (S + S.T)
    norms = np.linalg.norm(S, axis=0)
    top = norms.max() if norms.size else 0.0
    cut = norm_threshold * top if relative else norm_threshold
    keep = np.flatnonzero((norms > cut) & (norms > 0))
    if keep.size == 0:
        raise NoLeaderError("no column of CC^T survives the norm threshold: no hidden leader detected")
    U = S[:, keep] / norms[keep]
    cos = np.abs(U.T @ U)
    linked = cos > 1.0 - cosine_tolerance
    _, labels = connected_components(linked, directed=False)
    clusters = [keep[labels == lab].tolist() for lab in np.unique(labels)]
    clusters.sort(key=lambda cl: -norms[cl].max())
    return clusters, cos


def recover_c_columns(cct_hat, clusters, relative=DEFAULT_RELATIVE_THRESHOLD, threshold=None):
    """Normalized representative column per cluster.

    The representative ``j`` of each cluster is its column with the largest
    diagonal entry, and ``C[:, i] = CC^T[:, j] / sqrt(CC^T[j, j])``.  Entries
    below ``threshold`` (default ``relative`` times the column maximum) are
    set to zero.  Returns ``(c_hat, column_map, negatives_clamped)``, the flag
    being set when a negative entry exceeds the threshold in magnitude.
    """
    S = np.asarray(cct_hat, dtype=float)
    S = 0.5 * (S + S.T)
    nf = S.shape[0]
    c_hat = np.zeros((nf, len(clusters)))
    column_map = []
    negatives = False
    for i, cluster in enumerate(clusters):
        cluster = np.asarray(cluster)
        j = int(cluster[np.argmax(np.diag(S)[cluster])])
        if not S[j, j] > 0:
            raise DegenerateCouplingError(f"nonpositive diagonal entry CC^T[{j},{j}] = {S[j, j]:.3g}")
        col = S[:, j] / np.sqrt(S[j, j])
        thr = threshold if threshold is not None else relative * col.max()
        negatives |= bool(np.any(col < -max(thr, NEGATIVE_TOLERANCE)))
        c_hat[:, i] = np.where(col > thr, col, 0.0)
        column_map.append(j)
    return c_hat, column_map, negatives


def recover_e_diag(c_hat, cect_hat):
    """Least-squares ``E`` from ``C E C^T = CEC^T``, projected on its diagonal.

    Returns ``(e_hat, offdiag_max)`` where ``offdiag_max`` is the largest
    off-diagonal magnitude before projection.
    """
    c_hat = np.asarray(c_hat, dtype=float)
    if np.linalg.matrix_rank(c_hat) < c_hat.shape[1]:
        raise DegenerateCouplingError("estimated leader coupling C is rank deficient")
    pinv = np.linalg.pinv(c_hat)
    full = pinv @ np.asarray(cect_hat, dtype=float) @ pinv.T
    off = full - np.diag(np.diag(full))
    offdiag_max = float(np.max(np.abs(off))) if off.size else 0.0
    return np.diag(np.diag(full)), offdiag_max


def recover_alphas(e_hat, c_hat):
    """``alpha_i = E_ii + sum_j C_ji`` (leader out-row sums equal column sums of C)."""
    return np.diag(e_hat) + np.asarray(c_hat).sum(axis=0)


@dataclass(frozen=True, eq=False)
class MultiLeaderResult:
    c_hat: np.ndarray
    e_hat: np.ndarray
    alpha_hat: np.ndarray
    column_map: list
    cluster_report: list
    e_offdiag_max: float
    warnings: list = field(default_factory=list)
    permutation_note: str = "leader columns are identified only up to a permutation"

    @property
    def C(self):
        return self.c_hat

    @property
    def D(self):
        return self.c_hat.T

    @property
    def E(self):
        return self.e_hat

    @property
    def alphas(self):
        return self.alpha_hat

    def to_dict(self):
        return {
            "kind": "multi",
            "c_hat": self.c_hat.tolist(),
            "e_hat": self.e_hat.tolist(),
            "alpha_hat": self.alpha_hat.tolist(),
            "column_map": list(self.column_map),
            "cluster_report": self.cluster_report,
            "e_offdiag_max": self.e_offdiag_max,
            "warnings": list(self.warnings),
            "permutation_note": self.permutation_note,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["c_hat"], float), np.asarray(d["e_hat"], float),
                   np.asarray(d["alpha_hat"], float), d["column_map"], d["cluster_report"],
                   d["e_offdiag_max"], d.get("warnings", []))

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text


def _warn(messages, text):
    messages.append(text)
    warnings.warn(text, AssumptionWarning, stacklevel=3)


def recover_multi(be: BlockEstimates, n_leaders=None, norm_threshold=DEFAULT_NORM_THRESHOLD,
                  cosine_tolerance=DEFAULT_COSINE_TOLERANCE,
                  relative=DEFAULT_RELATIVE_THRESHOLD) -> MultiLeaderResult:
    """Group, normalize, solve for ``E`` and read off the leader parameters.

    If ``n_leaders`` is given and differs from the number of clusters, the
    largest ``n_leaders`` clusters are kept and an :class:`AssumptionWarning`
    is issued.  Overlapping supports of the recovered columns (two leaders
    apparently sharing a follower) are also reported as warnings.
    """
    if be.ced_hat is None:
        raise ValueError("multi-leader recovery needs blocks estimated with n_lags >= 3")
    notes = []
    cct = 0.5 * (be.cd_hat + be.cd_hat.T)
    clusters, _ = group_dependent_columns(cct, norm_threshold, cosine_tolerance)
    if n_leaders is not None and len(clusters) != n_leaders:
        _warn(notes, f"found {len(clusters)} leader clusters but {n_leaders} leaders were requested")
        clusters = clusters[:n_leaders]
    c_hat, column_map, negatives = recover_c_columns(cct, clusters, relative)
    if negatives:
        _warn(notes, "negative coupling estimates were clamped to zero")
    shared = np.flatnonzero((c_hat > 0).sum(axis=1) > 1)
    if shared.size:
        _warn(notes, f"recovered leader supports overlap on followers {shared.tolist()}")
    e_hat, off = recover_e_diag(c_hat, be.ced_hat)
    norms = np.linalg.norm(cct, axis=0)
    report = []
    for cluster, j in zip(clusters, column_map):
        u = cct[:, j] / np.linalg.norm(cct[:, j])
        report.append({
            "columns": [int(c) for c in cluster],
            "representative": int(j),
            "column_norms": [float(norms[c]) for c in cluster],
            "cosine_to_representative": [float(abs(u @ cct[:, c]) / norms[c]) for c in cluster],
        })
    return MultiLeaderResult(c_hat, e_hat, recover_alphas(e_hat, c_hat), column_map, report, off, notes)
