"""Credible intervals, accuracy metrics, and real-time queue estimates from posterior samples."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePosteriorError
from ..pts_core import DiscreteGrid

MIN_HDI_ESS = 10.0


def hdi(values, weights=None, mass=0.95):
    """Narrowest interval holding at least ``mass`` of the total weight.

    Draws are sorted by value and a window slides over them. Refuses when
    the Kish effective sample size is below 10.
    """
    if not 0.0 < mass <= 1.0:
        raise ValueError("mass must lie in (0, 1]")
    v = np.asarray(values, dtype=float).ravel()
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float).ravel()
    if v.size != w.size:
        raise ValueError("values and weights differ in length")
    ess = w.sum() ** 2 / np.sum(w * w) if np.any(w > 0) else 0.0
    if ess < MIN_HDI_ESS:
        raise ValueError(f"too few effective samples for an interval (ESS {ess:.1f} < {MIN_HDI_ESS:g})")
    order = np.argsort(v, kind="stable")
    v, w = v[order], w[order] / w.sum()
    cum = np.concatenate(([0.0], np.cumsum(w)))
    need = mass - 1e-12
    best = (v[0], v[-1])
    width = v[-1] - v[0]
    j = 0
    for i in range(v.size):
        j = max(j, i)
        while j < v.size and cum[j + 1] - cum[i] < need:
            j += 1
        if j == v.size:
            break
        if v[j] - v[i] < width:
            width = v[j] - v[i]
            best = (v[i], v[j])
    return float(best[0]), float(best[1])


@dataclass
class Metrics:
    mape: float
    awci: float
    cr: float
    n: int
    n_excluded: int


def metrics(estimates, truths, intervals=None) -> Metrics:
    """MAPE in percent, mean interval width, and coverage rate in percent.

    Zero truths are left out of the MAPE and counted in ``n_excluded``.
    """
    est = np.asarray(estimates, dtype=float)
    tru = np.broadcast_to(np.asarray(truths, dtype=float), est.shape)
    nz = tru != 0
    mape = float(np.mean(np.abs(est[nz] - tru[nz]) / np.abs(tru[nz])) * 100) if nz.any() else np.nan
    awci = cr = np.nan
    if intervals is not None:
        iv = np.asarray(intervals, dtype=float).reshape(-1, 2)
        awci = float(np.mean(iv[:, 1] - iv[:, 0]))
        cr = float(np.mean((tru >= iv[:, 0]) & (tru <= iv[:, 1])) * 100)
    return Metrics(mape, awci, cr, int(est.size), int((~nz).sum()))


def mixture_pmfs(weights, pmfs) -> np.ndarray:
    """Weighted average of per-sample filter posteriors, renormalized per step."""
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or not np.any(w > 0):
        raise DegeneratePosteriorError("mixture needs at least one positively weighted component")
    acc = None
    for wi, p in zip(w, pmfs):
        if wi == 0:
            continue
        acc = wi * p if acc is None else acc + wi * p
    return acc / acc.sum(axis=-1, keepdims=True)


def state_mixture(posterior, model, day=0) -> np.ndarray:
    """Queue pmf per step averaged over the parameter posterior.

    Repeated parameter points (as in MCMC output) are filtered once and
    their weights pooled.
    """
    if posterior.n == 0:
        raise DegeneratePosteriorError("empty parameter posterior")
    uniq, inv = np.unique(posterior.theta, axis=0, return_inverse=True)
    w = np.bincount(np.ravel(inv), weights=posterior.weights, minlength=uniq.shape[0])
    acc = None
    for th, wi in zip(uniq, w):
        if wi <= 0:
            continue
        res = model.filter(th, day)
        if not res.ok:
            continue
        acc = wi * res.posteriors if acc is None else acc + wi * res.posteriors
    if acc is None:
        raise DegeneratePosteriorError("no posterior sample yields a finite likelihood")
    return acc / acc.sum(axis=1, keepdims=True)


def pmf_mean(pmfs) -> np.ndarray:
    p = np.asarray(pmfs)
    return p @ np.arange(p.shape[-1])


def pmf_var(pmfs) -> np.ndarray:
    p = np.asarray(pmfs)
    k = np.arange(p.shape[-1])
    m = p @ k
    return p @ (k * k) - m * m


def green_onset_estimates(pmfs, grid: DiscreteGrid, init=None) -> np.ndarray:
    """Posterior mean queue at the green onset of each cycle."""
    pmfs = np.asarray(pmfs)
    if init is not None:
        ext = np.vstack([np.asarray(init)[None, : pmfs.shape[1]], pmfs])
    else:
        ext = np.vstack([np.full((1, pmfs.shape[1]), np.nan), pmfs])
    steps = grid.green_onset_steps(pmfs.shape[0])
    return pmf_mean(ext[steps])


def max_queue_eval(pmfs, true_max, grid: DiscreteGrid, init=None) -> Metrics:
    """MAPE of the green-onset mean queue against the true per-cycle maximum.

    Cycles whose true maximum is zero are excluded.
    """
    est = green_onset_estimates(pmfs, grid, init)
    tru = np.asarray(true_max, dtype=float)[: est.size]
    return metrics(est, tru)
