"""Command-line interface: simulate, fit, init, diagnose, plot.

Configuration may come from a flat `key = value` file (# comments allowed);
command-line flags override file values. Exit codes: 0 ok, 1 usage error,
2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import dataio, diagnostics, plotting
from .dataio import DataError
from .distributions import BesselExponential, BetaPrior, PriorSet, TruncatedNormal
from .geometry import (
    collinear_interval_mask,
    collinearity_threshold,
    detect_collinear_runs,
    find_bridge_gaps,
    initial_trajectory,
    sample_minimal_tally,
)
from .model import Dataset, ModelParams, observe, simulate
from .proposals import ProposalNumericalError
from .sampler import RunConfig, run

__all__ = ["main", "cli"]


class UsageError(Exception):
    pass


CONFIG_KEYS = {
    "iterations": int,
    "burn_in": int,
    "chains": int,
    "tau": float,
    "constructive_prob": float,
    "fixed_resample_prob": float,
    "gamma": float,
    "error_free": lambda v: v.lower() in ("1", "true", "yes"),
    "varsigma_fixed": float,
    "varsigma_upper": float,
    "rw_scale_frac": float,
    "kappa_rw_scale": float,
    "rho_rw_scale": float,
    "velocity_rw_frac": float,
    "n_trajectory_samples": int,
    "processes": int,
    "prior_lambda_mode": float,
    "prior_lambda_scale": float,
    "prior_sigma_mode": float,
    "prior_sigma_scale": float,
    "prior_varsigma_mode": float,
    "prior_varsigma_scale": float,
    "prior_kappa_a": float,
    "prior_kappa_b": float,
    "prior_rho_alpha": float,
    "prior_rho_beta": float,
}

DEFAULTS = {
    "iterations": 200_000,
    "burn_in": 50_000,
    "chains": 2,
    "tau": None,
    "constructive_prob": 0.5,
    "fixed_resample_prob": 0.5,
    "gamma": 0.0,
    "error_free": False,
    "varsigma_fixed": 0.2,
    "varsigma_upper": 25.0,
    "rw_scale_frac": 0.1,
    "kappa_rw_scale": 0.25,
    "rho_rw_scale": 0.08,
    "velocity_rw_frac": 0.1,
    "n_trajectory_samples": 100,
    "processes": 1,
    "prior_lambda_mode": 0.0,
    "prior_lambda_scale": 1.0 / 300.0,
    "prior_sigma_mode": 0.5,
    "prior_sigma_scale": 0.5,
    "prior_varsigma_mode": 0.0,
    "prior_varsigma_scale": 10.0,
    "prior_kappa_a": 1.0,
    "prior_kappa_b": -0.5,
    "prior_rho_alpha": 1.0,
    "prior_rho_beta": 1.2,
}


def load_config(path) -> dict:
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(
                f"{path}:{lineno}: unknown key '{key}'; valid keys: {', '.join(sorted(CONFIG_KEYS))}"
            )
        cfg[key] = CONFIG_KEYS[key](value)
    return cfg


def _settings(args) -> dict:
    merged = dict(DEFAULTS)
    if getattr(args, "config", None):
        merged.update(load_config(args.config))
    for key in CONFIG_KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if getattr(args, "error_free", False):
        merged["error_free"] = True
    return merged


def _priors(settings: dict) -> PriorSet:
    return PriorSet(
        lambda_prior=TruncatedNormal(settings["prior_lambda_mode"] or 1e-12, settings["prior_lambda_scale"]),
        sigma_prior=TruncatedNormal(settings["prior_sigma_mode"], settings["prior_sigma_scale"]),
        kappa_prior=BesselExponential(settings["prior_kappa_a"], settings["prior_kappa_b"]),
        rho_prior=BetaPrior(settings["prior_rho_alpha"], settings["prior_rho_beta"]),
        varsigma_prior=None
        if settings["error_free"]
        else TruncatedNormal(settings["prior_varsigma_mode"] or 1e-12, settings["prior_varsigma_scale"]),
    )


def _run_config(settings: dict, seed: int, scaled) -> RunConfig:
    df, tf = scaled.distance_factor, scaled.time_factor
    return RunConfig(
        iterations=settings["iterations"],
        burn_in=settings["burn_in"],
        n_chains=settings["chains"],
        seed=seed,
        fixed_resample_prob=settings["fixed_resample_prob"],
        gamma=settings["gamma"],
        tau=settings["tau"],
        constructive_prob=settings["constructive_prob"],
        error_free=settings["error_free"],
        varsigma_fixed=(settings["varsigma_fixed"] / df) if settings["error_free"] else None,
        varsigma_upper=settings["varsigma_upper"] / df,
        rw_scale_frac=settings["rw_scale_frac"],
        kappa_rw_scale=settings["kappa_rw_scale"],
        rho_rw_scale=settings["rho_rw_scale"],
        velocity_rw_frac=settings["velocity_rw_frac"],
        n_trajectory_samples=settings["n_trajectory_samples"],
        processes=settings["processes"],
    )


def cmd_simulate(args) -> int:
    params = ModelParams(
        lam=args.lam, kappa=args.kappa, sigma=args.sigma, rho=args.rho, varsigma=args.varsigma
    )
    rng = np.random.default_rng(args.seed)
    t_end = (args.n_obs - 1) * args.interval
    traj = simulate(params, 0.0, t_end, rng)
    times = np.arange(args.n_obs) * args.interval
    ds = observe(traj, times, args.varsigma, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_dataset(out / "observations.csv", ds)
    dataio.write_trajectories(out / "true_trajectory.csv", [traj])
    print(f"simulated {traj.n_turns} turns over [0, {t_end:g}]; wrote {out}/observations.csv")
    return 0


def cmd_fit(args) -> int:
    settings = _settings(args)
    ds = dataio.ingest(args.data)
    scaled = dataio.scale(ds)
    priors = _priors(settings).scaled(scaled.time_factor, scaled.distance_factor)
    config = _run_config(settings, args.seed, scaled)
    result = run(scaled.dataset, priors, config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for chain in result.chains:
        dataio.write_chain(out / f"chain_{chain.chain_id + 1}.csv", dataio.unscale_params(chain.samples, scaled))
    trajs = [dataio.unscale_trajectory(t, scaled) for t in result.trajectories]
    dataio.write_trajectories(out / "trajectory_samples.csv", trajs)

    cols = {
        "lambda": result.pooled_named("lam") / scaled.time_factor,
        "kappa": result.pooled_named("kappa"),
        "sigma": result.pooled_named("sigma") * scaled.distance_factor / scaled.time_factor,
        "rho": result.pooled_named("rho"),
        "varsigma": result.pooled_named("varsigma") * scaled.distance_factor,
        "N": result.pooled_named("N"),
    }
    table = diagnostics.quantile_table(cols)
    with open(out / "quantiles.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantile"] + list(diagnostics.REPORT_COLUMNS))
        for q in diagnostics.QUANTILES:
            w.writerow([q] + [f"{table[c][q]:.6g}" for c in diagnostics.REPORT_COLUMNS])

    with open(out / "ess.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "ess"])
        for name, series in cols.items():
            w.writerow([name, f"{diagnostics.ess(series):.1f}"])

    with open(out / "acceptance.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["chain", "update", "acceptance_rate", "numerical_rejects"])
        for chain in result.chains:
            for label, rate in chain.accept_rates.items():
                w.writerow([chain.chain_id + 1, label, f"{rate:.4f}", chain.numerical_rejects])

    svg = plotting.trajectory_plot(ds, trajs, title="posterior trajectory sample")
    (out / "plot.svg").write_text(svg, encoding="utf-8")
    nrej = sum(c.numerical_rejects for c in result.chains)
    print(f"fit complete: {settings['chains']} chains x {settings['iterations']} iterations; "
          f"{nrej} numerical rejections; results in {out}/")
    return 0


def cmd_init(args) -> int:
    settings = _settings(args)
    ds = dataio.ingest(args.data)
    scaled = dataio.scale(ds)
    sds = scaled.dataset
    rng = np.random.default_rng(args.seed)
    thr = collinearity_threshold(sds)
    runs = detect_collinear_runs(sds, thr)
    mask = collinear_interval_mask(runs, sds.n_intervals)
    bridges = find_bridge_gaps(sds, runs, time_tol=max(1e-9, thr), pos_tol=max(1e-9, thr))
    tally = sample_minimal_tally(sds.n_intervals, mask, rng, bridges.keys())
    vs0 = 0.5 * settings["varsigma_upper"] / scaled.distance_factor
    traj = initial_trajectory(sds, tally, vs0, rng)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_trajectories(out / "initial_trajectory.csv", [dataio.unscale_trajectory(traj, scaled)])
    print(
        f"initial reconstruction: {traj.n_turns} turns; {len(runs)} collinear runs; "
        f"tally written with trajectory to {out}/initial_trajectory.csv"
    )
    return 0


def cmd_diagnose(args) -> int:
    rows = []
    for path in args.chains:
        samples = dataio.read_chain(path)
        for i, name in enumerate(diagnostics.REPORT_COLUMNS):
            rows.append((path, name, diagnostics.ess(samples[args.burn_in :, i])))
    print("chain,parameter,ess")
    for path, name, value in rows:
        print(f"{path},{name},{value:.1f}")
    return 0


def cmd_plot(args) -> int:
    ds = dataio.ingest(args.data)
    trajs = dataio.read_trajectories(args.trajectories)
    if args.samples is not None:
        trajs = trajs[: args.samples]
    window = tuple(args.time_window) if args.time_window else None
    svg = plotting.trajectory_plot(ds, trajs, time_window=window)
    Path(args.out).write_text(svg, encoding="utf-8")
    print(f"wrote {args.out}")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="veljump", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a path and noisy observations")
    p_sim.add_argument("--lambda", dest="lam", type=float, required=True)
    p_sim.add_argument("--kappa", type=float, required=True)
    p_sim.add_argument("--sigma", type=float, required=True)
    p_sim.add_argument("--rho", type=float, required=True)
    p_sim.add_argument("--varsigma", type=float, required=True)
    p_sim.add_argument("--n-obs", type=int, default=100)
    p_sim.add_argument("--interval", type=float, default=120.0)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--out", default="simulated")
    p_sim.set_defaults(func=cmd_simulate)

    def add_config_flags(p):
        p.add_argument("--config", default=None, help="flat key = value configuration file")
        for key, typ in CONFIG_KEYS.items():
            if key == "error_free":
                continue
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ, default=None)
        p.add_argument("--error-free", dest="error_free", action="store_true", default=False)

    p_fit = sub.add_parser("fit", help="run the MCMC reconstruction")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--seed", type=int, required=True)
    p_fit.add_argument("--out", default="fit")
    add_config_flags(p_fit)
    p_fit.set_defaults(func=cmd_fit)

    p_init = sub.add_parser("init", help="emit the initial minimal-tally reconstruction")
    p_init.add_argument("--data", required=True)
    p_init.add_argument("--seed", type=int, default=0)
    p_init.add_argument("--out", default="init")
    add_config_flags(p_init)
    p_init.set_defaults(func=cmd_init)

    p_diag = sub.add_parser("diagnose", help="effective sample sizes from saved chains")
    p_diag.add_argument("chains", nargs="+")
    p_diag.add_argument("--burn-in", type=int, default=0)
    p_diag.set_defaults(func=cmd_diagnose)

    p_plot = sub.add_parser("plot", help="render observations and trajectory samples to SVG")
    p_plot.add_argument("--data", required=True)
    p_plot.add_argument("--trajectories", required=True)
    p_plot.add_argument("--out", default="plot.svg")
    p_plot.add_argument("--samples", type=int, default=None)
    p_plot.add_argument("--time-window", type=float, nargs=2, default=None)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def cli(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ProposalNumericalError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli())
