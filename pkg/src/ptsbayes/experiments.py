"""Monte-Carlo studies: coverage/accuracy tables and max-queue error curves."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceWarning
from .filtering import forward
from .inference import (LikelihoodModel, fit_map, green_onset_estimates, importance_sampling,
                        laplace, metrics, observed_fisher)
from .observation import GeometryParams, kernel_build
from .pts_core import DiscreteGrid, Uniform, stationary_cycle_start, vph_to_rate
from .simulator import (ROLE_FIT, ROLE_NOISE, ROLE_OBSERVE, SimConfig, simulate_observations,
                        simulate_replication, stream)

MASSES = (0.75, 0.85, 0.95)
REPORT_COLUMNS = ["hours", "param", "mape", "awci75", "cr75", "awci85", "cr85", "awci95", "cr95"]


def default_grid(hours=1.0, delta_t=1.0, cycle_s=90.0, green_s=35.0, warm_up_cycles=50):
    n = int(round(hours * 3600.0 / cycle_s))
    return DiscreteGrid.from_seconds(delta_t, cycle_s, green_s, n_cycles=max(n, 1),
                                     warm_up_cycles=warm_up_cycles)


@dataclass
class Estimate:
    """Posterior summary of one replication; μ reported in veh/h."""
    mean: np.ndarray
    map: np.ndarray
    intervals: dict
    ess: float
    ok: bool = True


def estimate(model: LikelihoodModel, rng, n_is=400, n_starts=2, masses=MASSES) -> Estimate:
    """MAP, Laplace proposal, then importance-sampled posterior mean and HDIs."""
    scale = np.array([3600.0 / model.grid.delta_t] * model.n_rates + [1.0])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        mp = fit_map(model, n_starts=n_starts, rng=rng, xatol=1e-4, fatol=1e-3)
        la = laplace(mp.z, observed_fisher(model, mp.z), model.space)
    if not la.positive_definite:
        nan = np.full(model.dim, np.nan)
        return Estimate(nan, mp.theta * scale, {}, 0.0, ok=False)
    post = importance_sampling(model, la, n_is, rng)
    intervals = {m: [tuple(np.array(post.hdi(i, m)) * scale[i]) for i in range(model.dim)]
                 for m in masses}
    return Estimate(post.mean() * scale, mp.theta * scale, intervals, post.ess)


@dataclass
class StudySetup:
    volume_vph: float = 720.0
    phi: float = 0.10
    hours: float = 8.0
    replications: int = 200
    seed: int = 2024
    sigma: float = 1.0
    half_width: int = 2
    n_is: int = 400
    n_starts: int = 2
    geom: GeometryParams = field(default_factory=GeometryParams)
    delta_t: float = 1.0
    cycle_s: float = 90.0
    green_s: float = 35.0

    def config(self, hours=None) -> SimConfig:
        grid = default_grid(self.hours if hours is None else hours, self.delta_t, self.cycle_s,
                            self.green_s)
        mu = float(vph_to_rate(self.volume_vph, self.delta_t))
        return SimConfig(grid, Uniform(mu), self.phi, self.geom,
                         kernel_build(self.sigma, self.half_width), self.seed, self.replications)


def run_study(setup: StudySetup, reps=None):
    """Estimate (μ, φ) on every replication; returns the list of :class:`Estimate`."""
    cfg = setup.config()
    out = []
    for r in (range(setup.replications) if reps is None else reps):
        rep = simulate_replication(cfg, r)
        model = LikelihoodModel([rep.obs], cfg.grid, cfg.kernel)
        out.append(estimate(model, stream(setup.seed, r, ROLE_FIT), setup.n_is, setup.n_starts))
    return out


def report_rows(estimates, truths, hours, names=("mu", "phi"), masses=MASSES):
    """Rows shaped ``hours,param,mape,awci75,cr75,awci85,cr85,awci95,cr95`` (percent for cr/mape)."""
    good = [e for e in estimates if e.ok]
    rows = []
    for i, name in enumerate(names):
        est = np.array([e.mean[i] for e in good])
        row = {"hours": hours, "param": name, "mape": metrics(est, truths[i]).mape}
        for m in masses:
            iv = [e.intervals[m][i] for e in good]
            mt = metrics(est, truths[i], iv)
            tag = int(round(m * 100))
            row[f"awci{tag}"] = mt.awci
            row[f"cr{tag}"] = mt.cr
        rows.append(row)
    return rows


def paired_widths(setup: StudySetup, short_hours, long_hours, reps, mass=0.95):
    """95% HDI widths of μ on a long day and its own leading ``short_hours`` prefix."""
    cfg = setup.config(long_hours)
    short_T = default_grid(short_hours, setup.delta_t, setup.cycle_s, setup.green_s).horizon
    out = []
    for r in reps:
        rep = simulate_replication(cfg, r)
        widths = []
        for obs in (rep.obs.truncate(short_T), rep.obs):
            model = LikelihoodModel([obs], cfg.grid, cfg.kernel)
            e = estimate(model, stream(setup.seed, r, ROLE_FIT), setup.n_is, setup.n_starts,
                         masses=(mass,))
            widths.append(np.diff(e.intervals[mass][0])[0] if e.ok else np.nan)
        out.append(tuple(widths))
    return np.array(out)


def map_volume_errors(volumes_vph, phi, hours, reps, seed, sigma=1.0, half_width=2, n_starts=2):
    """MAPE (percent) of the MAP arrival rate per volume.

    Every volume reuses the same seed, so the uniforms behind arrivals and
    observations are shared across volumes.
    """
    out = {}
    for v in volumes_vph:
        st = StudySetup(volume_vph=v, phi=phi, hours=hours, replications=reps, seed=seed,
                        sigma=sigma, half_width=half_width)
        cfg = st.config()
        est = []
        for r in range(reps):
            rep = simulate_replication(cfg, r)
            model = LikelihoodModel([rep.obs], cfg.grid, cfg.kernel)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                mp = fit_map(model, n_starts=n_starts, rng=stream(seed, r, ROLE_FIT),
                             xatol=1e-4, fatol=1e-3)
            est.append(mp.theta[0] * 3600.0 / cfg.grid.delta_t)
        out[v] = metrics(np.array(est), v).mape
    return out


def max_queue_curve(volume_vph, phis, n_cycles_per_day, days, seed, sigma=1.0, half_width=2,
                    delta_t=1.0, cycle_s=90.0, green_s=35.0, geom=None):
    """Green-onset queue MAPE per penetration rate, filtering with the true parameters.

    Each day's hidden queue is drawn once and observed at every φ with
    shared uniforms, so observed sets are nested as φ grows.
    """
    grid = DiscreteGrid.from_seconds(delta_t, cycle_s, green_s, n_cycles=n_cycles_per_day)
    mu = float(vph_to_rate(volume_vph, delta_t))
    kernel = kernel_build(sigma, half_width) if half_width > 0 else kernel_build(0.0, 0)
    cfg = SimConfig(grid, Uniform(mu), 0.5, geom or GeometryParams(), kernel, seed, days)
    init = stationary_cycle_start(Uniform(mu), grid)
    T = grid.horizon
    rates, sig = np.full(T, mu), grid.signal(T)
    eg = grid.elapsed_green_array(T)
    onset = {p: [] for p in phis}
    truth = []
    for d in range(days):
        base = simulate_replication(cfg, d)
        truth.append(base.truth.max_queue_per_cycle)
        for p in phis:
            obs, _ = simulate_observations(base.truth, p, kernel, stream(seed, d, ROLE_OBSERVE),
                                           stream(seed, d, ROLE_NOISE))
            xp, _ = obs.point_queue(eg)
            res = forward(rates, sig, obs.a_tilde, xp, init.mass, p, kernel)
            onset[p].append(green_onset_estimates(res.posteriors, grid, init.mass))
    truth = np.concatenate(truth)
    return {p: metrics(np.concatenate(onset[p]), truth).mape for p in phis}
