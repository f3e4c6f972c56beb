"""Command-line interface.

Every subcommand accepts ``--config FILE`` (a JSON object whose keys are the
option names with dashes replaced by underscores); explicit flags override
values from the file.  The effective parameters are written into each JSON
output under ``"config"``.

Exit codes: 0 success, 2 configuration error, 3 numerical or degeneracy
error, 4 violated modelling assumption.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import arfit
from .errors import AssumptionWarning, ConfigError, ReconError
from .evaluate import EvalReport, convergence_sweep, evaluate, loglog_slope, write_svg_scatter
from .multi_recovery import MultiLeaderResult
from .network import NetworkSpec, assemble, check_stability, generate_paper_network
from .recipes import FIG1, FIG1_REPORTED, FIG2, FIG2_REPORTED, reconstruct, simulation_seed
from .simulate import Trajectory, lyapunov_covariance, run
from .single_recovery import SingleLeaderResult

log = logging.getLogger("consensus_recon")

RECIPES = {
    "fig1": FIG1,
    "fig2": FIG2,
    "fig1-memoryless": FIG1.with_(memoryless=True, target_e=None),
}


def _floats(text):
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return [int(float(v)) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _write_json(path, payload):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _config(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "config")}


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from None


def _load_result(d):
    return SingleLeaderResult.from_dict(d) if d.get("kind") == "single" else MultiLeaderResult.from_dict(d)


# -- commands ----------------------------------------------------------------

def cmd_generate(args):
    alphas = args.alphas if args.alphas is not None else (
        [args.alpha] * args.leaders if args.alpha is not None else None)
    spec = generate_paper_network(
        args.followers, args.leaders, args.keep_threshold, args.symmetric_leaders, args.seed,
        alphas=alphas, noise_std=args.noise_std, require_stable=not args.allow_unstable,
        max_retries=args.max_retries,
    )
    spec.to_json(args.out)
    report = check_stability(assemble(spec))
    print(f"wrote {args.out}: {spec.n_followers} followers, {spec.n_leaders} leaders")
    print(f"spectral radius {report.spectral_radius:.6f} ({'stable' if report.stable else 'not stable'})")
    dm = assemble(spec)
    if spec.n_leaders:
        print("leader memory E diagonal:", np.array2string(np.diag(dm.E), precision=6))
        touched = ((dm.C > 0) | (dm.D.T > 0)).sum(axis=1)
        print(f"leaders share a follower: {'yes' if np.any(touched > 1) else 'no'}; "
              f"D = C^T: {'yes' if np.allclose(dm.D, dm.C.T) else 'no'}; "
              f"leaders interact: {'yes' if np.any(dm.E - np.diag(np.diag(dm.E))) else 'no'}")
    return 0


def cmd_simulate(args):
    spec = NetworkSpec.from_dict(_read_json(args.network))
    dm = assemble(spec)
    traj = run(dm, args.steps, args.seed, spec.noise_std, args.burn_in, args.force, spec.identifier())
    out = args.out
    if args.format == "csv" or (args.format is None and str(out).endswith(".csv")):
        traj.to_csv(out)
    else:
        traj.to_binary(out)
    print(f"wrote {out}: {traj.n_steps} steps x {traj.n_followers} followers (seed {args.seed})")
    var = traj.data.var(axis=0)
    if check_stability(dm).stable:
        predicted = np.diag(lyapunov_covariance(dm, spec.noise_std))[: dm.n_followers]
        rel = var / predicted - 1.0
        print("follower variance (sample / stationary):")
        for i, (v, p, r) in enumerate(zip(var, predicted, rel)):
            print(f"  x{i + 1}: {v:.6g} / {p:.6g} ({r:+.2%})")
    else:
        print("follower variance:", np.array2string(var, precision=6))
    return 0


def cmd_reconstruct(args):
    traj = Trajectory.load(args.trajectory)
    be = arfit.estimate_blocks(arfit.lag_covariances(traj, args.lags), args.cond_threshold,
                               args.ridge, args.ridge_lambda)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AssumptionWarning)
        result = reconstruct(be, args.leaders, args.threshold, args.relative_threshold)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    payload = {"config": _config(args), "blocks": be.to_dict(), "result": result.to_dict()}
    if args.lags >= 4:
        e_mag = float(np.max(np.abs(np.diag(result.E))))
        payload["truncation"] = vars(arfit.truncation_residual_check(be, e_mag))
    _write_json(args.out, payload)
    print(f"wrote {args.out} ({'single' if isinstance(result, SingleLeaderResult) else 'multi'}-leader route)")
    print("E_hat:", np.array2string(np.diag(result.E), precision=6))
    print("alpha_hat:", np.array2string(np.atleast_1d(result.alphas), precision=6))
    return 0


def _evaluate_files(spec, recon, out, scatter, svg_dir, relative):
    dm = assemble(spec)
    be = arfit.BlockEstimates.from_dict(recon["blocks"])
    result = _load_result(recon["result"]) if recon.get("result") else None
    report = evaluate(dm, be, result, spec.alphas, relative)
    return _write_report(report, out, scatter, svg_dir)


def _write_report(report: EvalReport, out, scatter, svg_dir):
    if out:
        report.to_json(out)
    if scatter:
        report.write_scatter_csv(scatter)
    if svg_dir:
        Path(svg_dir).mkdir(parents=True, exist_ok=True)
        for block in report.blocks:
            write_svg_scatter(report, block, Path(svg_dir) / f"scatter_{block}.svg")
    return report


def cmd_evaluate(args):
    spec = NetworkSpec.from_dict(_read_json(args.network))
    recon = _read_json(args.reconstruction)
    report = _evaluate_files(spec, recon, args.out, args.scatter, args.svg_dir, args.relative_threshold)
    for name, info in report.blocks.items():
        print(f"{name:>4}: max-abs {info['max_abs']:.4g}  rel-fro {info['rel_fro']:.4g}  "
              f"precision {info['precision']:.3f}  recall {info['recall']:.3f}")
    if report.alpha_errors:
        print("alpha errors:", np.array2string(np.array(report.alpha_errors), precision=4))
    return 0


def cmd_sweep(args):
    recipe = RECIPES[args.recipe]
    table, cells = convergence_sweep(recipe, args.n_t, args.seeds, network_seed=args.network_seed,
                                     fixed_network=not args.per_seed_networks, n_lags=args.lags,
                                     workers=args.workers)
    print(f"{'N_t':>10} {'ok':>4} {'B max-abs':>12} {'|E-E^|':>10} {'|a-a^|':>10}")
    for row in table:
        print(f"{row['n_t']:>10d} {row['n_ok']:>4d} {row['b_max_abs']['median']:>12.5g} "
              f"{row['e_abs_err']['median']:>10.5g} {row['alpha_abs_err']['median']:>10.5g}")
    slope = None
    if len(table) > 1:
        slope = loglog_slope([r["n_t"] for r in table], [r["b_max_abs"]["median"] for r in table])
        print(f"log-log slope of median B error: {slope:.3f}")
    if args.out:
        _write_json(args.out, {"config": _config(args), "recipe": recipe.to_dict(), "table": table,
                               "cells": cells, "b_error_slope": slope})
    return 0


def _reproduce(recipe, args):
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n_steps = args.steps or recipe.n_steps
    spec = recipe.draw(args.seed)
    spec.to_json(out / "network.json")
    dm = assemble(spec)
    traj = run(dm, n_steps, simulation_seed(args.seed), spec.noise_std, spec_ref=spec.identifier())
    traj.to_binary(out / "trajectory.bin")
    be = arfit.fit(traj)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AssumptionWarning)
        result = reconstruct(be, spec.n_leaders)
    config = dict(_config(args), n_steps=n_steps, recipe=recipe.to_dict())
    _write_json(out / "reconstruction.json", {"config": config, "blocks": be.to_dict(),
                                              "result": result.to_dict()})
    report = evaluate(dm, be, result, spec.alphas)
    _write_report(report, out / "report.json", out / "scatter.csv", out / "svg" if args.svg else None)
    return spec, dm, result, report, n_steps


def cmd_reproduce_fig1(args):
    spec, dm, res, report, n_steps = _reproduce(FIG1, args)
    lines = [
        f"fig1 reproduction, seed {args.seed}, N_t = {n_steps}",
        f"B max-abs error: {report.blocks['B']['max_abs']:.5f}",
        f"E true: {dm.E[0, 0]:.6f} (reported instance {FIG1_REPORTED['E']})",
        f"E_hat: {res.e_hat:.6f} (reported {FIG1_REPORTED['E_hat']})",
        f"E_hat ratio std: {res.e_hat_std:.4f} (reported {FIG1_REPORTED['E_hat_std']})",
        f"alpha true: {spec.alphas[0]:.4f} (reported {FIG1_REPORTED['alpha']})",
        f"alpha_hat: {res.alpha_hat:.4f} (reported {FIG1_REPORTED['alpha_hat']})",
        f"|E_hat - E| = {abs(res.e_hat - dm.E[0, 0]):.4f} "
        f"(reported {abs(FIG1_REPORTED['E_hat'] - FIG1_REPORTED['E']):.4f})",
    ]
    return _finish_summary(args, lines)


def cmd_reproduce_fig2(args):
    spec, dm, res, report, n_steps = _reproduce(FIG2, args)
    fmt = lambda v: "(" + ", ".join(f"{x:.3f}" for x in v) + ")"  # noqa: E731
    lines = [
        f"fig2 reproduction, seed {args.seed}, N_t = {n_steps}",
        f"leader clusters found: {res.c_hat.shape[1]}",
        f"B max-abs error: {report.blocks['B']['max_abs']:.5f}",
        f"alpha true: {fmt(report.alpha_true)} (reported {fmt(FIG2_REPORTED['alpha'])})",
        f"alpha_hat (aligned): {fmt(report.alpha_hat)} (reported {fmt(FIG2_REPORTED['alpha_hat'])})",
        f"alpha errors: {fmt(report.alpha_errors)}",
        f"E diagonal true: {fmt(np.diag(dm.E))}",
    ]
    return _finish_summary(args, lines)


def _finish_summary(args, lines):
    text = "\n".join(lines) + "\n"
    (Path(args.out_dir) / "summary.txt").write_text(text)
    print(text, end="")
    return 0


# -- parser ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="consensus-recon", description="Reconstruct hidden leaders from follower time series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with option values")
        p.set_defaults(func=func)
        return p

    p = add("generate", cmd_generate, "draw a random leader-follower network")
    p.add_argument("--followers", type=int, default=9)
    p.add_argument("--leaders", type=int, default=1)
    p.add_argument("--keep-threshold", type=float, default=0.6)
    p.add_argument("--symmetric-leaders", action="store_true")
    p.add_argument("--alpha", type=float, help="same alpha for every leader")
    p.add_argument("--alphas", type=_floats, help="comma-separated leader alphas")
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-retries", type=int, default=1000)
    p.add_argument("--allow-unstable", action="store_true")
    p.add_argument("--out", default="network.json")

    p = add("simulate", cmd_simulate, "simulate follower trajectories")
    p.add_argument("--network", default="network.json")
    p.add_argument("--steps", type=int, default=FIG1.n_steps)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--force", action="store_true", help="simulate even if the system is not stable")
    p.add_argument("--format", choices=["csv", "binary"])
    p.add_argument("--out", default="trajectory.bin")

    p = add("reconstruct", cmd_reconstruct, "estimate blocks and recover hidden leaders")
    p.add_argument("--trajectory", default="trajectory.bin")
    p.add_argument("--lags", type=int, default=arfit.DEFAULT_N_LAGS)
    p.add_argument("--leaders", type=int, help="number of hidden leaders (inferred if omitted)")
    p.add_argument("--threshold", type=float, help="absolute support threshold for CD")
    p.add_argument("--relative-threshold", type=float, default=0.25)
    p.add_argument("--cond-threshold", type=float, default=arfit.DEFAULT_COND_THRESHOLD)
    p.add_argument("--ridge", action="store_true")
    p.add_argument("--ridge-lambda", type=float)
    p.add_argument("--out", default="reconstruction.json")

    p = add("evaluate", cmd_evaluate, "compare a reconstruction with the ground truth")
    p.add_argument("--network", default="network.json")
    p.add_argument("--reconstruction", default="reconstruction.json")
    p.add_argument("--relative-threshold", type=float, default=0.25)
    p.add_argument("--out", default="report.json")
    p.add_argument("--scatter", default="scatter.csv")
    p.add_argument("--svg-dir")

    p = add("sweep", cmd_sweep, "error versus time-series length")
    p.add_argument("--recipe", choices=sorted(RECIPES), default="fig1")
    p.add_argument("--n-t", type=_ints, default=[10_000, 100_000, 1_000_000])
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--network-seed", type=int, default=0)
    p.add_argument("--per-seed-networks", action="store_true")
    p.add_argument("--lags", type=int, default=arfit.DEFAULT_N_LAGS)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="sweep.json")

    for name, func, default_dir, help_text in (
        ("reproduce-fig1", cmd_reproduce_fig1, "fig1", "single-leader run with the fig1 recipe"),
        ("reproduce-fig2", cmd_reproduce_fig2, "fig2", "four-leader run with the fig2 recipe"),
    ):
        p = add(name, func, help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--steps", type=int, help="override the time-series length")
        p.add_argument("--out-dir", default=default_dir)
        p.add_argument("--svg", action="store_true", help="also write SVG scatter plots")
    return parser, sub


def parse_args(argv=None):
    parser, sub = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = _read_json(args.config)
        if not isinstance(cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        subparser = sub.choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = set(cfg) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        subparser.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def main(argv=None):
    try:
        args = parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except ReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
