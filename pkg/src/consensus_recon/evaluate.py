"""Reconstruction quality: alignment, error norms, support recovery, sweeps."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import arfit
from .errors import ConfigError, ReconError
from .network import DynamicsMatrix
from .single_recovery import DEFAULT_RELATIVE_THRESHOLD, SingleLeaderResult

log = logging.getLogger(__name__)

EXHAUSTIVE_MAX_LEADERS = 8


def _abs_cosine(a, b):
    na = np.linalg.norm(a, axis=0)
    nb = np.linalg.norm(b, axis=0)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    return np.abs((a / na).T @ (b / nb))


def align_leader_permutation(c_true, c_hat):
    """Permutation ``perm`` such that ``c_hat[:, perm]`` best matches ``c_true``.

    Maximizes the total absolute cosine similarity of matched columns, by
    enumeration for up to 8 leaders and by the Hungarian algorithm above.
    """
    c_true = np.asarray(c_true, dtype=float)
    c_hat = np.asarray(c_hat, dtype=float)
    if c_true.shape != c_hat.shape:
        raise ConfigError(f"shape mismatch: {c_true.shape} vs {c_hat.shape}")
    n = c_true.shape[1]
    sim = _abs_cosine(c_true, c_hat)
    if n <= EXHAUSTIVE_MAX_LEADERS:
        best, best_score = tuple(range(n)), -np.inf
        for perm in itertools.permutations(range(n)):
            score = sim[np.arange(n), perm].sum()
            if score > best_score + 1e-15:
                best, best_score = perm, score
        return tuple(int(p) for p in best)
    rows, cols = linear_sum_assignment(-sim)
    return tuple(int(c) for c in cols[np.argsort(rows)])


def support_metrics(true_block, est_block, threshold):
    """Precision and recall of ``|est| > threshold`` against the nonzeros of ``true_block``.

    An empty predicted (or true) support gives precision (or recall) 1.
    """
    true_block = np.asarray(true_block)
    est_block = np.asarray(est_block)
    if true_block.shape != est_block.shape:
        raise ConfigError(f"shape mismatch: {true_block.shape} vs {est_block.shape}")
    truth = true_block != 0
    pred = np.abs(est_block) > threshold
    tp = int(np.sum(truth & pred))
    n_pred, n_true = int(pred.sum()), int(truth.sum())
    precision = tp / n_pred if n_pred else 1.0
    recall = tp / n_true if n_true else 1.0
    return precision, recall


def block_errors(true_block, est_block):
    t = np.asarray(true_block, dtype=float)
    e = np.asarray(est_block, dtype=float)
    if t.shape != e.shape:
        raise ConfigError(f"shape mismatch: {t.shape} vs {e.shape}")
    diff = e - t
    norm = np.linalg.norm(t)
    return {
        "max_abs": float(np.max(np.abs(diff))) if diff.size else 0.0,
        "rel_fro": float(np.linalg.norm(diff) / norm) if norm > 0 else float(np.linalg.norm(diff)),
    }


@dataclass
class EvalReport:
    blocks: dict
    scatter: list
    permutation: list
    alpha_true: list
    alpha_hat: list
    alpha_errors: list
    sweep: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(text)
        return text

    def write_scatter_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["block", "row", "col", "true", "estimated"])
            for rec in self.scatter:
                w.writerow([rec[0], rec[1], rec[2], repr(rec[3]), repr(rec[4])])

    def scatter_pairs(self, block):
        pts = [(t, e) for b, _, _, t, e in self.scatter if b == block]
        return np.array(pts).reshape(-1, 2)


def _estimated_blocks(dm: DynamicsMatrix, result, perm):
    if isinstance(result, SingleLeaderResult):
        return result.C, result.D, result.E, np.atleast_1d(result.alphas)
    perm = list(perm)
    c = result.C[:, perm]
    e = result.E[np.ix_(perm, perm)]
    return c, c.T, e, np.asarray(result.alphas)[perm]


def evaluate(dm: DynamicsMatrix, blocks, result=None, alphas=None, relative=DEFAULT_RELATIVE_THRESHOLD):
    """Compare estimates with the ground truth ``dm``.

    ``blocks`` is a :class:`~consensus_recon.arfit.BlockEstimates`; ``result``
    an optional single- or multi-leader reconstruction.  Support metrics
    use ``relative`` times the largest estimated magnitude of each block.
    ``alphas`` defaults to the leader parameters implied by ``dm``.
    """
    truth = dict(zip(("B", "CD", "CED"), dm.truncated_blocks()))
    est = dict(zip(("B", "CD", "CED"), blocks.lag_blocks[:3]))
    perm = list(range(dm.n_leaders))
    alpha_true = dm.leader_alphas if alphas is None else np.asarray(alphas, dtype=float)
    alpha_hat = []
    if result is not None:
        if result.C.shape != dm.C.shape:
            raise ConfigError(f"reconstruction has {result.C.shape[1]} leaders, truth has {dm.n_leaders}")
        if not isinstance(result, SingleLeaderResult):
            perm = list(align_leader_permutation(dm.C, result.C))
        c, d, e, alpha_hat = _estimated_blocks(dm, result, perm)
        truth.update(C=dm.C, D=dm.D, E=dm.E)
        est.update(C=c, D=d, E=e)
    report_blocks = {}
    scatter = []
    for name, t in truth.items():
        e = est[name]
        info = block_errors(t, e)
        thr = relative * float(np.max(np.abs(e))) if e.size else 0.0
        info["precision"], info["recall"] = support_metrics(t, e, thr)
        info["threshold"] = thr
        report_blocks[name] = info
        for (i, j), tv in np.ndenumerate(t):
            scatter.append((name, int(i), int(j), float(tv), float(e[i, j])))
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    errors = np.abs(alpha_hat - alpha_true).tolist() if alpha_hat.size else []
    return EvalReport(report_blocks, scatter, perm, np.asarray(alpha_true).tolist(),
                      alpha_hat.tolist(), errors)


def write_svg_scatter(report: EvalReport, block, path, size=320):
    """Minimal SVG scatter of estimated vs true entries with the diagonal."""
    pts = report.scatter_pairs(block)
    lo = float(min(pts.min(), 0.0)) if pts.size else 0.0
    hi = float(pts.max()) if pts.size else 1.0
    if hi <= lo:
        hi = lo + 1.0
    pad = 40
    span = size - 2 * pad

    def sx(v):
        return pad + (v - lo) / (hi - lo) * span

    def sy(v):
        return size - pad - (v - lo) / (hi - lo) * span

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">',
        f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>',
        f'<line x1="{sx(lo):.2f}" y1="{sy(lo):.2f}" x2="{sx(hi):.2f}" y2="{sy(hi):.2f}" '
        'stroke="gray" stroke-dasharray="4 3"/>',
        f'<text x="{size / 2}" y="{size - 8}" text-anchor="middle" font-size="12">true {block}</text>',
        f'<text x="12" y="{size / 2}" font-size="12" transform="rotate(-90 12 {size / 2})" '
        f'text-anchor="middle">estimated {block}</text>',
        f'<text x="{pad}" y="{size - pad + 14}" font-size="10">{lo:.3g}</text>',
        f'<text x="{size - pad}" y="{size - pad + 14}" font-size="10" text-anchor="end">{hi:.3g}</text>',
    ]
    for t, e in pts:
        parts.append(f'<circle cx="{sx(t):.2f}" cy="{sy(e):.2f}" r="2.5" fill="steelblue"/>')
    parts.append("</svg>")
    Path(path).write_text("\n".join(parts))


# -- convergence sweeps ------------------------------------------------------

SWEEP_METRICS = ("b_max_abs", "cd_max_abs", "ced_max_abs", "e_abs_err", "alpha_abs_err")


def _sweep_cell(args):
    from .recipes import run_pipeline

    recipe, spec, n_t, seed, n_lags = args
    cell = {"n_t": int(n_t), "seed": int(seed), "error": None}
    try:
        out = run_pipeline(spec, n_t, seed, n_lags=n_lags)
        rep = evaluate(out.dm, out.blocks, out.result)
        cell.update(
            b_max_abs=rep.blocks["B"]["max_abs"],
            cd_max_abs=rep.blocks["CD"]["max_abs"],
            ced_max_abs=rep.blocks["CED"]["max_abs"],
            e_abs_err=rep.blocks["E"]["max_abs"],
            alpha_abs_err=float(np.mean(rep.alpha_errors)),
        )
    except ReconError as exc:
        cell["error"] = f"{type(exc).__name__}: {exc}"
    return cell


def convergence_sweep(recipe, n_t_list, n_seeds=20, seeds=None, network_seed=0,
                      fixed_network=True, n_lags=arfit.DEFAULT_N_LAGS, workers=1):
    """Run the pipeline for every (N_t, seed) cell and summarize per N_t.

    With ``fixed_network`` one network is drawn from ``recipe`` with
    ``network_seed`` and only the noise realization changes with the seed;
    otherwise each seed draws its own network.  Failing cells are recorded
    and skipped in the summary.  Returns ``(table, cells)`` where each table
    row holds the median and interquartile range of each error metric.
    """
    seeds = list(range(n_seeds)) if seeds is None else list(seeds)
    fixed = recipe.draw(network_seed) if fixed_network else None
    jobs = [(recipe, fixed if fixed_network else recipe.draw(s), n_t, s, n_lags)
            for n_t in n_t_list for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            cells = list(pool.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(j) for j in jobs]
    table = []
    for n_t in n_t_list:
        ok = [c for c in cells if c["n_t"] == n_t and c["error"] is None]
        row = {"n_t": int(n_t), "n_ok": len(ok),
               "n_failed": sum(1 for c in cells if c["n_t"] == n_t and c["error"] is not None)}
        for m in SWEEP_METRICS:
            vals = np.array([c[m] for c in ok])
            if vals.size:
                q1, med, q3 = np.percentile(vals, [25, 50, 75])
                row[m] = {"median": float(med), "iqr": float(q3 - q1)}
            else:
                row[m] = {"median": float("nan"), "iqr": float("nan")}
        table.append(row)
        log.info("N_t=%d: %d ok, %d failed", n_t, row["n_ok"], row["n_failed"])
    return table, cells


def loglog_slope(n_t_values, errors):
    """Least-squares slope of log(error) against log(N_t)."""
    return float(np.polyfit(np.log(np.asarray(n_t_values, float)), np.log(np.asarray(errors, float)), 1)[0])
