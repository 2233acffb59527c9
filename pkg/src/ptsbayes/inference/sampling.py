"""Weighted parameter samples: importance sampling and random-walk Metropolis."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConvergenceWarning, DegeneratePosteriorError, ProposalMismatchWarning
from ._target import as_target
from .optimize import LaplaceApprox

MIN_IS_DRAWS = 100
ESS_WARN_FRACTION = 0.05
RHAT_WARN = 1.05


@dataclass
class WeightedPosterior:
    theta: np.ndarray
    weights: np.ndarray
    log_lik: np.ndarray
    kind: str
    names: list
    z: np.ndarray | None = None
    chain: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.theta = np.atleast_2d(np.asarray(self.theta, dtype=float))
        if self.theta.shape[0] == 1 and self.weights.size != 1:
            self.theta = self.theta.T
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or not np.any(self.weights > 0):
            raise DegeneratePosteriorError("weights must be non-negative and not all zero")

    @property
    def n(self) -> int:
        return self.weights.size

    @property
    def normalized_weights(self) -> np.ndarray:
        return self.weights / self.weights.sum()

    @property
    def ess(self) -> float:
        """Kish effective sample size ``(sum w)^2 / sum w^2``."""
        w = self.weights
        return float(w.sum() ** 2 / np.sum(w * w))

    def mean(self) -> np.ndarray:
        return self.normalized_weights @ self.theta

    def sd(self) -> np.ndarray:
        m = self.mean()
        return np.sqrt(self.normalized_weights @ (self.theta - m) ** 2)

    def mc_se(self) -> np.ndarray:
        """Monte-Carlo standard error of the weighted mean (ESS-based)."""
        n_eff = self.diagnostics.get("ess_bulk", self.ess)
        return self.sd() / np.sqrt(np.minimum(n_eff, self.ess))

    def marginal(self, i: int):
        return self.theta[:, i], self.weights

    def hdi(self, i: int, mass: float = 0.95):
        from .evaluation import hdi
        return hdi(self.theta[:, i], self.weights, mass)


def importance_sampling(target, proposal: LaplaceApprox, n: int, rng=None) -> WeightedPosterior:
    """Draw from the Laplace proposal and weight by ``exp(log p - log q)``.

    Weights are computed after subtracting the largest log weight. A
    :class:`ProposalMismatchWarning` is issued when ESS < 5% of ``n``.
    """
    if n < MIN_IS_DRAWS:
        raise ValueError(f"importance sampling needs at least {MIN_IS_DRAWS} draws, got {n}")
    rng = np.random.default_rng(0) if rng is None else rng
    tgt = as_target(target, proposal.map_z.size)
    z = proposal.sample(n, rng)
    lq = proposal.logpdf(z)
    lt = np.array([tgt.log_target(zi) for zi in z])
    ljac = np.atleast_1d(tgt.space.log_jac(z))
    log_lik = lt - ljac
    logw = lt - lq
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every importance draw has zero likelihood")
    w = np.exp(logw - top)
    post = WeightedPosterior(tgt.space.to_natural(z), w, log_lik, "importance",
                             list(tgt.space.names), z=z)
    post.diagnostics["ess"] = post.ess
    if post.ess < ESS_WARN_FRACTION * n:
        warnings.warn(f"importance weights degenerate: ESS {post.ess:.1f} of {n} draws; "
                      "the Gaussian proposal does not match the posterior",
                      ProposalMismatchWarning, stacklevel=2)
    return post


def mh_accept_prob(delta_log_target: float) -> float:
    """Metropolis acceptance probability for a symmetric proposal."""
    if delta_log_target >= 0:
        return 1.0
    return float(np.exp(delta_log_target))


def split_rhat(chains: np.ndarray) -> np.ndarray:
    """Split-R̂ per coordinate for draws shaped (n_chains, n_draws, dim)."""
    chains = np.asarray(chains, dtype=float)
    if chains.ndim == 2:
        chains = chains[..., None]
    m, n, d = chains.shape
    half = n // 2
    if half < 2:
        return np.full(d, np.nan)
    parts = np.concatenate([chains[:, :half], chains[:, n - half:]], axis=0)
    means = parts.mean(axis=1)
    var_w = parts.var(axis=1, ddof=1).mean(axis=0)
    var_b = half * means.var(axis=0, ddof=1)
    var_hat = (half - 1) / half * var_w + var_b / half
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_hat / var_w)
    return np.where(var_w > 0, r, np.nan)


def _ess_bulk(chains: np.ndarray) -> np.ndarray:
    """Effective sample size from pooled autocorrelations (Geyer initial positive sequence)."""
    m, n, d = chains.shape
    out = np.empty(d)
    for j in range(d):
        x = chains[:, :, j] - chains[:, :, j].mean()
        var = x.var()
        if var == 0:
            out[j] = m * n
            continue
        f = np.fft.rfft(x, 2 * n, axis=1)
        acov = np.fft.irfft(f * np.conj(f), axis=1)[:, :n].mean(axis=0) / n
        rho = acov / acov[0]
        tau = 1.0
        for k in range(1, n - 1, 2):
            pair = rho[k] + rho[k + 1]
            if pair <= 0:
                break
            tau += 2 * pair
        out[j] = m * n / tau
    return out


def rw_metropolis(target, init, n_chains=4, n_samples=1000, n_warmup=1000, adapt=True,
                  rng=None, init_cov=None, init_spread=0.1, target_accept=0.234):
    """Adaptive random-walk Metropolis in unconstrained space.

    During the first half of warm-up the Gaussian proposal covariance
    follows the chain's empirical covariance; the scale is tuned toward
    ``target_accept`` through the whole warm-up. Both are frozen afterwards. Returns pooled post-warm-up draws, each
    with weight 1.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    init = np.asarray(init, dtype=float)
    dim = init.shape[-1] if init.ndim else 1
    tgt = as_target(target, dim)
    space = tgt.space
    if init.ndim == 2:
        starts = space.to_unconstrained(init)
        n_chains = starts.shape[0]
    else:
        z0 = np.atleast_1d(space.to_unconstrained(np.atleast_1d(init)))
        starts = z0 + init_spread * rng.standard_normal((n_chains, dim))
    cov0 = (0.1 ** 2) * np.eye(dim) if init_cov is None else np.atleast_2d(init_cov)
    draws = np.empty((n_chains, n_samples, dim))
    logt = np.empty((n_chains, n_samples))
    accept = np.zeros(n_chains)
    for c in range(n_chains):
        z = starts[c].copy()
        lp = tgt.log_target(z)
        tries = 0
        while not np.isfinite(lp):
            tries += 1
            if tries > 100:
                raise DegeneratePosteriorError("could not find a starting point with positive density")
            z = starts[c] + init_spread * rng.standard_normal(dim)
            lp = tgt.log_target(z)
        log_scale = np.log(2.38 ** 2 / dim)
        cov = cov0.copy()
        mean_w = z.copy()
        m2 = np.zeros((dim, dim))
        n_acc = 0
        cov_stop = n_warmup // 2
        for it in range(n_warmup + n_samples):
            L = np.linalg.cholesky(np.exp(log_scale) * cov + 1e-12 * np.eye(dim))
            prop = z + L @ rng.standard_normal(dim)
            lp_new = tgt.log_target(prop)
            a = mh_accept_prob(lp_new - lp) if np.isfinite(lp_new) else 0.0
            if rng.random() < a:
                z, lp = prop, lp_new
                if it >= n_warmup:
                    n_acc += 1
            if it < n_warmup:
                if adapt:
                    # scale step size restarts once the covariance is frozen
                    j = it + 1 if it < cov_stop else it - cov_stop + 1
                    log_scale += (a - target_accept) / j ** 0.6
                    if it < cov_stop:
                        k = it + 1
                        delta = z - mean_w
                        mean_w = mean_w + delta / (k + 1)
                        m2 = m2 + np.outer(delta, z - mean_w)
                        if k >= 100 and k % 25 == 0:
                            cov = m2 / k + 1e-8 * np.eye(dim)
            else:
                draws[c, it - n_warmup] = z
                logt[c, it - n_warmup] = lp
        accept[c] = n_acc / max(n_samples, 1)
    rhat = split_rhat(draws)
    ess_bulk = _ess_bulk(draws)
    flat = draws.reshape(-1, dim)
    log_lik = logt.ravel() - np.atleast_1d(space.log_jac(flat))
    post = WeightedPosterior(space.to_natural(flat), np.ones(flat.shape[0]), log_lik, "mcmc",
                             list(space.names), z=flat,
                             chain=np.repeat(np.arange(n_chains), n_samples))
    post.diagnostics.update(rhat=rhat, accept=accept, ess_bulk=float(np.min(ess_bulk)),
                            ess_per_coord=ess_bulk)
    if np.any(rhat > RHAT_WARN):
        warnings.warn(f"chains have not mixed: split R-hat {np.round(rhat, 3).tolist()}",
                      ConvergenceWarning, stacklevel=2)
    return post
