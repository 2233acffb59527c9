"""Forward recursion over the hidden queue: filtering posteriors and marginal likelihood.

Also holds the brute-force enumeration oracles used to check the recursion
on tiny instances.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import HorizonTooLarge
from .observation import GaussKernel, ObservationSeq, censored_obs_prob, obs_arrival_prob
from .pts_core import ArrivalProfile, DiscreteGrid, QueuePmf, TrafficParams, stationary_cycle_start

MAX_BRUTE_FORCE_HORIZON = 16


@dataclass
class FilterResult:
    """Output of one forward pass.

    ``posteriors[i]`` is the filtered queue pmf after step ``i + 1``.
    When the observations are impossible under the parameters, ``log_lik`` is
    ``-inf``, ``fail_step`` names the 1-based step, and rows from that step
    on are NaN.
    """

    log_lik: float
    posteriors: np.ndarray | None
    arrival_post: np.ndarray
    loglik_cum: np.ndarray
    interim: np.ndarray | None = None
    fail_step: int | None = None
    fail_reason: str | None = None
    clamped: int = 0

    @property
    def ok(self) -> bool:
        return self.fail_step is None

    def mean_queue(self) -> np.ndarray:
        k = np.arange(self.posteriors.shape[1])
        return self.posteriors @ k

    def quantile(self, q: float) -> np.ndarray:
        cdf = np.cumsum(self.posteriors, axis=1)
        return np.argmax(cdf >= q - 1e-12, axis=1)

    def increments(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.loglik_cum)))


def arrival_posterior(a: float, phi: float, A_tilde: int) -> float:
    """P(A(t) = 1 | A_tilde(t)) given prior arrival probability ``a``."""
    if A_tilde:
        return 1.0
    return a * (1.0 - phi) / (1.0 - a * phi)


_REASONS = {_kernels.FAIL_ZERO_LIKELIHOOD: "zero-likelihood", _kernels.FAIL_OVERFLOW: "overflow"}


def forward(rates, signal, a_tilde, x_point, init, phi, kernel: GaussKernel,
            store=True, store_interim=False, clamped=0) -> FilterResult:
    """Forward recursion on explicit per-step arrays.

    ``x_point`` is the observed point queue (vehicles ahead of the observed
    vehicle) at steps with ``a_tilde == 1``; other entries are ignored.
    """
    out = _kernels.forward(
        np.ascontiguousarray(rates, dtype=float),
        np.ascontiguousarray(signal, dtype=np.uint8),
        np.ascontiguousarray(a_tilde, dtype=np.uint8),
        np.ascontiguousarray(x_point, dtype=np.int64),
        np.ascontiguousarray(init, dtype=float),
        float(phi), kernel.weights, kernel.half_width, bool(store), bool(store_interim))
    L, fail_i, fail_kind, _, post, interim, ahat, lcum = out
    return FilterResult(
        log_lik=float(L),
        posteriors=post if store else None,
        arrival_post=ahat,
        loglik_cum=lcum,
        interim=interim if store_interim else None,
        fail_step=None if fail_i < 0 else int(fail_i) + 1,
        fail_reason=_REASONS.get(int(fail_kind)),
        clamped=clamped,
    )


def run_filter(obs: ObservationSeq, params: TrafficParams | float, profile: ArrivalProfile,
               grid: DiscreteGrid, kernel: GaussKernel, init: QueuePmf | None = None,
               k_max: int | None = None, store=True, store_interim=False) -> FilterResult:
    """Filter one observation sequence on ``grid``'s signal plan.

    ``init`` defaults to the stationary cycle-start pmf of ``profile``.
    ``params`` may be a :class:`TrafficParams` or just the penetration rate.
    """
    phi = params.phi if isinstance(params, TrafficParams) else float(params)
    T = obs.horizon
    if init is None:
        init = stationary_cycle_start(profile, grid, k_max)
    eg = grid.elapsed_green_array(T)
    x_point, clamped = obs.point_queue(eg)
    return forward(profile.per_step(grid, T), grid.signal(T), obs.a_tilde, x_point,
                   init.mass, phi, kernel, store, store_interim, clamped)


# -- enumeration oracles -----------------------------------------------------

def _check_horizon(T):
    if T > MAX_BRUTE_FORCE_HORIZON:
        raise HorizonTooLarge(f"enumeration over 2^{T} arrival paths refused "
                              f"(limit T <= {MAX_BRUTE_FORCE_HORIZON})")


def _enumerate(rates, signal, a_tilde, x_point, init, phi, kernel):
    """Every (initial queue, arrival path) pair with its running joint weight.

    Returns ``(w, q)`` of shape (paths, T): ``w[:, i]`` is the probability of
    the initial value, the arrivals, and the observations through step
    ``i + 1``; ``q[:, i]`` is the queue after that step.
    """
    rates = np.asarray(rates, dtype=float)
    T = rates.size
    _check_horizon(T)
    init = np.asarray(init, dtype=float)
    paths = np.array(list(itertools.product((0, 1), repeat=T)), dtype=np.int64).reshape(-1, T)
    x0 = np.flatnonzero(init > 0)
    A = np.tile(paths, (x0.size, 1))
    q = np.repeat(x0, paths.shape[0])
    w = init[q].copy()
    n_q = int(x0.max(initial=0)) + T + 1
    W = np.empty(A.shape)
    Q = np.empty(A.shape, dtype=np.int64)
    for i in range(T):
        a_i = A[:, i]
        w = w * np.where(a_i == 1, rates[i], 1.0 - rates[i])
        w = w * np.array([obs_arrival_prob(v, int(a_tilde[i]), phi) for v in (0, 1)])[a_i]
        if a_tilde[i]:
            table = np.array([censored_obs_prob(int(x_point[i]), m, kernel) for m in range(n_q)])
            w = w * table[q]
        q = q + a_i
        if signal[i]:
            q = np.where(q >= 1, q - 1, q)
        W[:, i] = w
        Q[:, i] = q
    return W, Q


def brute_force_loglik(rates, signal, a_tilde, x_point, init, phi, kernel) -> float:
    """log p(observations) by summing over every arrival path and initial queue."""
    T = len(rates)
    if T == 0:
        return 0.0
    W, _ = _enumerate(rates, signal, a_tilde, x_point, init, phi, kernel)
    total = W[:, -1].sum()
    return float(np.log(total)) if total > 0 else -np.inf


def brute_force_posterior(rates, signal, a_tilde, x_point, init, phi, kernel, t,
                          k_max=None) -> np.ndarray:
    """p(X(t) | observations up to t) by enumeration over the first ``t`` steps."""
    _check_horizon(t)
    n = len(init) if k_max is None else k_max + 1
    W, Q = _enumerate(rates[:t], signal[:t], a_tilde[:t], x_point[:t], init, phi, kernel)
    post = np.bincount(Q[:, t - 1], weights=W[:, t - 1], minlength=n)
    s = post.sum()
    if s == 0:
        return np.full(n, np.nan)
    if np.any(post[n:] > 0):
        raise ValueError("posterior support exceeds k_max")
    return post[:n] / s


def brute_force_posteriors(rates, signal, a_tilde, x_point, init, phi, kernel, k_max=None):
    """All filtering posteriors t = 1..T from a single enumeration (rows as in FilterResult)."""
    T = len(rates)
    n = len(init) if k_max is None else k_max + 1
    W, Q = _enumerate(rates, signal, a_tilde, x_point, init, phi, kernel)
    out = np.full((T, n), np.nan)
    for i in range(T):
        post = np.bincount(Q[:, i], weights=W[:, i], minlength=n)
        if np.any(post[n:] > 0):
            raise ValueError("posterior support exceeds k_max")
        s = post.sum()
        if s > 0:
            out[i] = post[:n] / s
    return out


def brute_force_run(obs: ObservationSeq, params: TrafficParams | float, profile: ArrivalProfile,
                    grid: DiscreteGrid, kernel: GaussKernel, init: QueuePmf):
    """Enumeration oracle on the same inputs as :func:`run_filter`: (log_lik, posteriors)."""
    phi = params.phi if isinstance(params, TrafficParams) else float(params)
    T = obs.horizon
    x_point, _ = obs.point_queue(grid.elapsed_green_array(T))
    args = (profile.per_step(grid, T), grid.signal(T), obs.a_tilde, x_point, init.mass, phi, kernel)
    return brute_force_loglik(*args), brute_force_posteriors(*args)
