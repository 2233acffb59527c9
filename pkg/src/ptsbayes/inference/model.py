"""Log-likelihood of Θ = (μ_0, ..., μ_{m-1}, φ) over one or more observation days."""
from __future__ import annotations

import warnings

import numpy as np

from .. import _kernels
from ..errors import SaturationWarning, TruncationOverflow
from ..filtering import FilterResult, forward
from ..observation import GaussKernel, ObservationSeq
from ..pts_core import DiscreteGrid, PiecewiseConstant, QueuePmf, Uniform, stationary_cycle_start
from .transforms import Identity, Log, Logit, ParamSpace

RATE_BOUNDS = (0.0, 0.95)
PHI_BOUNDS = (0.005, 1.0)


class LikelihoodModel:
    """Sum of per-day forward-filter log-likelihoods under a uniform prior.

    Each day starts from its own stationary cycle-start pmf for the
    candidate Θ (``init="stationary"``) or from an empty queue
    (``init="empty"``). Rates are per-step arrival probabilities.
    """

    def __init__(self, datasets, grid: DiscreteGrid, kernel: GaussKernel, breakpoints=None,
                 init="stationary", k_max=None, rate_bounds=RATE_BOUNDS, phi_bounds=PHI_BOUNDS,
                 rate_transform="log"):
        if isinstance(datasets, ObservationSeq):
            datasets = [datasets]
        if not datasets:
            raise ValueError("need at least one observation sequence")
        if init not in ("stationary", "empty"):
            raise ValueError(f"unknown init {init!r}")
        self.datasets = list(datasets)
        self.grid = grid
        self.kernel = kernel
        self.breakpoints = None if breakpoints is None else tuple(int(b) for b in breakpoints)
        self.init = init
        self.k_max = grid.cycle_len if k_max is None else int(k_max)
        self.n_rates = 1 if self.breakpoints is None else len(self.breakpoints)
        names = [f"mu_{i}" for i in range(self.n_rates)] + ["phi"]
        rate_tr = {"log": Log, "identity": Identity}[rate_transform]()
        self.space = ParamSpace(
            names, [rate_tr] * self.n_rates + [Logit(*phi_bounds)],
            [rate_bounds[0]] * self.n_rates + [phi_bounds[0]],
            [rate_bounds[1]] * self.n_rates + [phi_bounds[1]])
        self._prepared = []
        for obs in self.datasets:
            T = obs.horizon
            if T % grid.cycle_len:
                raise ValueError(f"observation horizon {T} is not a whole number of cycles")
            x_point, clamped = obs.point_queue(grid.elapsed_green_array(T))
            self._prepared.append((T, np.ascontiguousarray(grid.signal(T), dtype=np.uint8),
                                   np.ascontiguousarray(obs.a_tilde, dtype=np.uint8),
                                   np.ascontiguousarray(x_point, dtype=np.int64), clamped))
        self.n_evals = 0

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def names(self):
        return self.space.names

    def profile(self, theta):
        rates = np.asarray(theta, dtype=float)[: self.n_rates]
        if self.breakpoints is None:
            return Uniform(float(rates[0]))
        return PiecewiseConstant(self.breakpoints, rates)

    def initial_pmf(self, theta) -> QueuePmf | None:
        """Cycle-start pmf for Θ, or None when the warm-up overflows."""
        if self.init == "empty":
            return QueuePmf.delta(0, self.k_max)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", SaturationWarning)
            try:
                return stationary_cycle_start(self.profile(theta), self.grid, self.k_max)
            except TruncationOverflow:
                return None

    def loglik(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        self.n_evals += 1
        if not self.space.contains(theta):
            return -np.inf
        init = self.initial_pmf(theta)
        if init is None:
            return -np.inf
        cyc = self.profile(theta).cycle_rates(self.grid.cycle_len)
        phi = float(theta[-1])
        kw, h = self.kernel.weights, self.kernel.half_width
        total = 0.0
        for T, sig, at, xp, _ in self._prepared:
            rates = np.resize(cyc, T)
            L = _kernels.forward(rates, sig, at, xp, init.mass, phi, kw, h, False, False)[0]
            total += L
            if total == -np.inf:
                break
        return float(total)

    def log_target(self, z) -> float:
        """Log posterior density in unconstrained coordinates (uniform prior)."""
        z = np.asarray(z, dtype=float)
        theta = self.space.to_natural(z)
        L = self.loglik(theta)
        if not np.isfinite(L):
            return -np.inf
        return L + float(self.space.log_jac(z))

    def loglik_z(self, z) -> float:
        return self.loglik(self.space.to_natural(np.asarray(z, dtype=float)))

    def filter(self, theta, day=0, store_interim=False) -> FilterResult:
        """Full forward pass with stored posteriors for one day."""
        theta = np.asarray(theta, dtype=float)
        init = self.initial_pmf(theta)
        if init is None:
            raise TruncationOverflow("warm-up reached k_max for these parameters")
        T, sig, at, xp, clamped = self._prepared[day]
        rates = np.resize(self.profile(theta).cycle_rates(self.grid.cycle_len), T)
        return forward(rates, sig, at, xp, init.mass, float(theta[-1]), self.kernel,
                       store=True, store_interim=store_interim, clamped=clamped)

    def default_init(self, phi0=0.2):
        """Crude starting point: observed arrivals per step divided by a guessed φ."""
        n_obs = sum(int(obs.a_tilde.sum()) for obs in self.datasets)
        T = sum(obs.horizon for obs in self.datasets)
        mu0 = min(max(n_obs / max(T, 1) / phi0, 1e-3), 0.5)
        return np.array([mu0] * self.n_rates + [phi0])
