"""Command-line entry point: ``ptsbayes {simulate,encode,fit,filter,evaluate}``.

Exit codes: 0 success, 2 configuration or input error, 3 degenerate
inference, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .errors import (ConfigError, DegeneratePosteriorError, EncodeCollisionError, LinkOverflow,
                     TruncationOverflow)
from .experiments import MASSES, REPORT_COLUMNS, Estimate, estimate, max_queue_curve, report_rows
from .inference import (LikelihoodModel, WeightedPosterior, fit_map, grid_posterior, green_onset_estimates, hdi,
                        importance_sampling, laplace, metrics, observed_fisher, rw_metropolis)
from .observation import (encode_with_diagnostics, read_observations_csv, read_trajectories_csv,
                          write_observations_csv, write_trajectories_csv)
from .pts_core import rate_to_vph, vph_to_rate
from .simulator import (ROLE_FIT, ROLE_HIDDEN, ROLE_NOISE, ROLE_OBSERVE, SimConfig,
                        simulate_replication, stream)

EXIT_OK, EXIT_INPUT, EXIT_DEGENERATE, EXIT_NUMERIC = 0, 2, 3, 4
LAPLACE_DRAWS = 4000


class CommandError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.set("run.seed", args.seed)
    return cfg


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return "nan" if np.isnan(x) else f"{x:.10g}"
    return x


def _tree_hash(root: Path, skip=("manifest.txt",)) -> str:
    h = hashlib.sha256()
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in skip:
            h.update(str(p.relative_to(root)).encode())
            h.update(p.read_bytes())
    return h.hexdigest()[:16]


def _write_manifest(out: Path, cfg: RunConfig, extra: dict):
    lines = {"tool": "ptsbayes", "version": __version__, "config_hash": cfg.digest(),
             "seed": cfg["run.seed"], **extra, "data_hash": _tree_hash(out)}
    (out / "manifest.txt").write_text("".join(f"{k} = {v}\n" for k, v in lines.items()),
                                      encoding="utf-8")


def _read_manifest(path: Path) -> dict:
    out = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


# -- simulate ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.hours is not None:
        cfg.set("experiment.hours", args.hours)
    if args.replications is not None:
        cfg.set("experiment.replications", args.replications)
    cfg.validate()
    grid = cfg.grid
    sim = SimConfig(grid, cfg.profile(), cfg["demand.phi"], cfg.geometry, cfg.kernel,
                    cfg["run.seed"], cfg["experiment.replications"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(cfg.canonical(), encoding="utf-8")
    n_obs = 0
    for r in range(sim.replications):
        rep = simulate_replication(sim, r, trajectories=args.trajectories)
        d = out / f"rep_{r:03d}"
        d.mkdir(exist_ok=True)
        tr = rep.truth
        _write_csv(d / "truth.csv", ["t", "S", "A", "X"],
                   [(i + 1, int(tr.signal[i]), int(tr.arrivals[i]), int(tr.queues[i]))
                    for i in range(tr.horizon)])
        _write_csv(d / "cycles.csv", ["cycle", "max_queue"],
                   [(i + 1, int(q)) for i, q in enumerate(tr.max_queue_per_cycle)])
        write_observations_csv(rep.obs, d / "observations.csv")
        if args.trajectories:
            write_trajectories_csv(rep.observed_trajectories, d / "trajectories.csv")
        n_obs += rep.obs.n_observed
    _write_manifest(out, cfg, {
        "replications": sim.replications, "hours": cfg["experiment.hours"],
        "cycles": grid.n_cycles, "horizon_steps": grid.horizon,        "streams": f"hidden={ROLE_HIDDEN},observe={ROLE_OBSERVE},noise={ROLE_NOISE}"})
    print(f"wrote {sim.replications} replication(s), {grid.n_cycles} cycles each, "
          f"{n_obs} observed vehicles to {out}")
    return EXIT_OK


# -- encode ------------------------------------------------------------------

def cmd_encode(args) -> int:
    cfg = _config(args)
    trajs = read_trajectories_csv(args.trajectories)
    grid = cfg.grid_for_hours(args.hours) if args.hours is not None else cfg.grid
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            obs, diag = encode_with_diagnostics(trajs, cfg.geometry, grid)
        except EncodeCollisionError as exc:
            raise CommandError(f"{args.trajectories}: {exc}", EXIT_INPUT) from None
    write_observations_csv(obs, args.out)
    print(f"encoded={diag.encoded} skipped={len(diag.skipped)} collisions=0 "
          f"second_stops={len(diag.second_stops)} out_of_window={diag.out_of_window}")
    for vid in diag.skipped:
        print(f"skipped {vid}: no usable sample before the first stop", file=sys.stderr)
    return EXIT_OK


# -- fit ---------------------------------------------------------------------

def _model(cfg: RunConfig, datasets) -> LikelihoodModel:
    grid = cfg.grid_for_cycles(max(1, datasets[0].horizon // cfg.grid.cycle_len))
    return LikelihoodModel(datasets, grid, cfg.kernel, breakpoints=cfg.breakpoints_steps,
                           init=cfg["inference.init"])


def _scale(model):
    return np.array([3600.0 / model.grid.delta_t] * model.n_rates + [1.0])


def _summary_lines(names, map_theta, mean, intervals, extra=None):
    lines = []
    for i, name in enumerate(names):
        lines.append(f"{name}.map = {_fmt(map_theta[i])}")
        lines.append(f"{name}.mean = {_fmt(mean[i])}")
        for m in MASSES:
            lo, hi = intervals[m][i]
            lines.append(f"{name}.hdi{int(round(m * 100))} = {_fmt(lo)},{_fmt(hi)}")
    for k, v in (extra or {}).items():
        lines.append(f"{k} = {_fmt(v)}")
    return lines


def _write_samples(path, post, scale, names):
    cols = ["sample_id", "chain", "w", "log_lik", "phi"] + names[:-1]
    chain = post.chain if post.chain is not None else np.zeros(post.n, dtype=int)
    th = post.theta * scale
    rows = [[i, int(chain[i]), _fmt(post.weights[i]), _fmt(post.log_lik[i]), _fmt(th[i, -1])]
            + [_fmt(v) for v in th[i, :-1]] for i in range(post.n)]
    _write_csv(path, cols, rows)


def cmd_fit(args) -> int:
    cfg = _config(args)
    method = args.method or cfg["inference.method"]
    datasets = [read_observations_csv(p) for p in args.observations]
    model = _model(cfg, datasets)
    scale = _scale(model)
    names = model.names
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = stream(cfg["run.seed"], 0, ROLE_FIT)
    extra = {"method": method, "days": len(datasets), "mu_units": "veh/h"}

    if method == "grid":
        if model.n_rates != 1:
            raise CommandError("grid method supports a uniform arrival profile only", EXIT_INPUT)
        lo, hi, n = cfg["inference.grid_mu_vph"]
        mu_ax = vph_to_rate(np.linspace(lo, hi, n), model.grid.delta_t)
        lo, hi, n = cfg["inference.grid_phi"]
        gp = grid_posterior(model, [mu_ax, np.linspace(lo, hi, n)])
        rows = gp.cells()
        _write_csv(out / "grid.csv", ["mu_vph", "phi", "log_lik", "posterior"],
                   [[_fmt(r[0] * scale[0]), _fmt(r[1]), _fmt(r[2]), _fmt(r[3])] for r in rows])
        intervals = {m: [tuple(np.array(gp.hdi(i, m)) * scale[i]) for i in range(2)]
                     for m in MASSES}
        lines = _summary_lines(names, gp.argmax() * scale, gp.mean() * scale, intervals,
                               {**extra, "cells": gp.posterior.size})
    else:
        mp = fit_map(model, n_starts=cfg["inference.n_starts"], rng=rng)
        la = laplace(mp.z, observed_fisher(model, mp.z), model.space)
        extra["log_lik_map"] = mp.log_lik
        extra["map_converged"] = mp.converged
        if not la.positive_definite:
            raise CommandError("observed information at the MAP is not positive definite; "
                               "use --method grid or mcmc", EXIT_NUMERIC)
        if method in ("map", "laplace"):
            z = la.sample(LAPLACE_DRAWS, rng)
            th = model.space.to_natural(z)
            post = WeightedPosterior(th, np.ones(len(th)), np.full(len(th), np.nan), "laplace",
                                     names, z=z)
            extra["corr_mu0_phi"] = la.correlation()[0, -1]
        elif method == "is":
            post = importance_sampling(model, la, cfg["inference.n_is"], rng)
            extra["ess"] = post.ess
        else:
            post = rw_metropolis(model, mp.theta, n_chains=cfg["inference.mcmc_chains"],
                                 n_samples=cfg["inference.mcmc_samples"],
                                 n_warmup=cfg["inference.mcmc_warmup"], rng=rng,
                                 init_cov=la.covariance)
            extra["rhat_max"] = float(np.nanmax(post.diagnostics["rhat"]))
            extra["accept_mean"] = float(np.mean(post.diagnostics["accept"]))
            extra["ess_bulk"] = post.diagnostics["ess_bulk"]
        if method != "map":
            _write_samples(out / "posterior.csv", post, scale, names)
        intervals = {m: [tuple(np.array(post.hdi(i, m)) * scale[i]) for i in range(model.dim)]
                     for m in MASSES}
        lines = _summary_lines(names, mp.theta * scale, post.mean() * scale, intervals, extra)
    text = "\n".join(lines) + "\n"
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


# -- filter ------------------------------------------------------------------

def cmd_filter(args) -> int:
    cfg = _config(args)
    obs = read_observations_csv(args.observations)
    model = _model(cfg, [obs])
    dt = model.grid.delta_t
    if args.mu_vph is not None:
        rates = vph_to_rate(np.array([float(v) for v in args.mu_vph.split(",")]), dt)
    else:
        rates = cfg.profile().params
    if rates.size != model.n_rates:
        raise CommandError(f"expected {model.n_rates} arrival rate(s), got {rates.size}", EXIT_INPUT)
    phi = cfg["demand.phi"] if args.phi is None else args.phi
    res = model.filter(np.concatenate([rates, [phi]]))
    mean = res.mean_queue()
    q05, q50, q95 = (res.quantile(q) for q in (0.05, 0.5, 0.95))
    rows = [[i + 1, _fmt(mean[i]), int(q05[i]), int(q50[i]), int(q95[i]),
             _fmt(res.arrival_post[i]), _fmt(res.loglik_cum[i])] for i in range(obs.horizon)]
    _write_csv(args.out, ["t", "mean_queue", "p05", "p50", "p95", "a_hat", "loglik_cum"], rows)
    if not res.ok:
        raise CommandError(f"observations impossible under these parameters "
                           f"({res.fail_reason} at step {res.fail_step})", EXIT_NUMERIC)
    print(f"log_lik = {res.log_lik:.6f}")
    return EXIT_OK


# -- evaluate ----------------------------------------------------------------

def cmd_evaluate(args) -> int:
    run = Path(args.run_dir)
    if not (run / "config.txt").exists():
        raise CommandError(f"{run}: not a simulation run directory (config.txt missing)", EXIT_INPUT)
    cfg = load_config(run / "config.txt")
    if args.seed is not None:
        cfg.set("run.seed", args.seed)
    out = Path(args.out) if args.out else run / "evaluation"
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg["run.seed"]
    reps = sorted(p for p in run.glob("rep_*") if p.is_dir())
    if not reps:
        raise CommandError(f"{run}: no replications found", EXIT_INPUT)
    dt = cfg["signal.delta_t_s"]
    truths = list(rate_to_vph(cfg.profile().params, dt)) + [cfg["demand.phi"]]
    names = ([f"mu_{i}" for i in range(len(truths) - 1)] if len(truths) > 2 else ["mu"]) + ["phi"]
    hours_list = cfg["experiment.report_hours"] or [cfg["experiment.hours"]]
    cycle_T = cfg.grid.cycle_len
    rows = []
    queue_rows = []
    for hours in hours_list:
        T = cfg.grid_for_hours(hours).horizon
        ests = []
        for r, d in enumerate(reps):
            obs = read_observations_csv(d / "observations.csv")
            if obs.horizon < T:
                raise CommandError(f"{d}: {obs.horizon} steps recorded, {hours} h requested",
                                   EXIT_INPUT)
            model = _model(cfg, [obs.truncate(T)])
            e: Estimate = estimate(model, stream(seed, r, ROLE_FIT), cfg["inference.n_is"],
                                   cfg["inference.n_starts"])
            ests.append(e)
            if hours == hours_list[-1] and e.ok:
                cyc = np.loadtxt(d / "cycles.csv", delimiter=",", skiprows=1, ndmin=2)[:, 1]
                res = model.filter(e.mean / _scale(model))
                if res.ok:
                    est = green_onset_estimates(res.posteriors, model.grid,
                                                model.initial_pmf(e.mean / _scale(model)).mass)
                    queue_rows.append([r, _fmt(metrics(est, cyc[: T // cycle_T]).mape)])
        n_bad = sum(not e.ok for e in ests)
        if n_bad:
            print(f"{hours} h: {n_bad} replication(s) with non-Gaussian information skipped",
                  file=sys.stderr)
        rows += report_rows(ests, truths, hours, names)
    _write_csv(out / "report.csv", REPORT_COLUMNS,
               [[_fmt(r[c]) for c in REPORT_COLUMNS] for r in rows])
    _write_csv(out / "max_queue.csv", ["replication", "mape"], queue_rows)
    curve = []
    per_day = 100
    days = max(1, int(np.ceil(cfg["experiment.curve_cycles"] / per_day)))
    for v in cfg["experiment.curve_volumes_vph"]:
        res = max_queue_curve(v, cfg["experiment.curve_phis"], per_day, days, seed,
                              cfg["kernel.sigma_veh"], cfg["kernel.half_width_veh"], dt,
                              cfg["signal.cycle_s"], cfg["signal.green_s"], cfg.geometry)
        curve += [[_fmt(v), _fmt(p), _fmt(m)] for p, m in res.items()]
    _write_csv(out / "mape_curve.csv", ["volume_vph", "phi", "mape"], curve)
    _write_manifest(out, cfg, {"run_dir": str(run), "replications": len(reps)})
    with open(out / "report.csv", encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return EXIT_OK


# -- entry point -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ptsbayes", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", help="key = value config file (defaults built in)")
        sp.add_argument("--seed", type=int, help="overrides run.seed")
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("simulate", help="generate ground truth and observations")
    common(sp, "run directory")
    sp.add_argument("--hours", type=float)
    sp.add_argument("--replications", type=int)
    sp.add_argument("--trajectories", action="store_true",
                    help="also write raw trajectories of observed vehicles")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("encode", help="trajectory CSV -> observation CSV")
    sp.add_argument("trajectories")
    common(sp, "observation CSV")
    sp.add_argument("--hours", type=float, help="horizon (default experiment.hours)")
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("fit", help="estimate arrival rate(s) and penetration rate")
    sp.add_argument("observations", nargs="+", help="one observation CSV per day")
    common(sp, "output directory")
    sp.add_argument("--method", choices=("grid", "map", "laplace", "is", "mcmc"))
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("filter", help="per-step queue posterior for given parameters")
    sp.add_argument("observations")
    common(sp, "queue profile CSV")
    sp.add_argument("--mu-vph", help="arrival volume(s), comma-separated for piecewise profiles")
    sp.add_argument("--phi", type=float)
    sp.set_defaults(func=cmd_filter)

    sp = sub.add_parser("evaluate", help="accuracy/coverage report for a simulation run")
    sp.add_argument("run_dir")
    sp.add_argument("--config", help="ignored; the run's own config.txt is used")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out", help="output directory (default RUN_DIR/evaluation)")
    sp.set_defaults(func=cmd_evaluate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, FileNotFoundError, EncodeCollisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DegeneratePosteriorError as exc:
        print(f"error: degenerate posterior: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (TruncationOverflow, LinkOverflow, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
