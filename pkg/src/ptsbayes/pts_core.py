"""Discretization, signal timing, arrival profiles and the queue-pmf transition.

Time convention
---------------
Model steps are 1-based, ``t = 1..T``; arrays store step ``t`` at index
``t - 1``. The in-cycle position of step ``t`` is ``(t - 1) % C``, so each
cycle covers steps ``kC + 1 .. kC + C`` and a pmf "at time ``kC``" is the
queue distribution at the start of a cycle.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, SaturationWarning, TruncationOverflow

PMF_TOL = 1e-9


def delta_t_for_unit_flow(q_m: float, lanes: int) -> float:
    """Step length (s) at which one step of saturated discharge is one vehicle.

    Parameters
    ----------
    q_m : float
        Saturation flow rate per lane, veh/(lane*s).
    lanes : int
        Number of lanes serving the movement.
    """
    if not q_m > 0:
        raise ValueError(f"saturation flow must be positive, got {q_m}")
    if lanes < 1:
        raise ValueError(f"lane count must be >= 1, got {lanes}")
    return 1.0 / (q_m * lanes)


def _steps(seconds: float, delta_t: float, what: str) -> int:
    n = seconds / delta_t
    r = round(n)
    if abs(n - r) > 1e-9:
        raise ConfigError(f"{what} = {seconds} s is not a whole number of {delta_t} s steps")
    return int(r)


@dataclass(frozen=True)
class DiscreteGrid:
    """Time grid and fixed signal timing of one movement."""

    delta_t: float
    cycle_len: int
    green_start: int
    green_len: int
    horizon: int
    warm_up_cycles: int = 50

    def __post_init__(self):
        if not self.delta_t > 0:
            raise ConfigError(f"delta_t must be positive, got {self.delta_t}")
        if self.cycle_len < 1 or self.green_len < 1:
            raise ConfigError("cycle_len and green_len must be >= 1")
        if self.green_start < 0 or self.green_start + self.green_len > self.cycle_len:
            raise ConfigError(
                f"green [{self.green_start}, {self.green_start + self.green_len}) "
                f"does not fit in a cycle of {self.cycle_len} steps"
            )
        if self.horizon < 1 or self.horizon % self.cycle_len:
            raise ConfigError(
                f"horizon {self.horizon} is not a positive multiple of cycle_len {self.cycle_len}"
            )
        if self.warm_up_cycles < 0:
            raise ConfigError("warm_up_cycles must be >= 0")

    @classmethod
    def from_seconds(cls, delta_t, cycle_s, green_s, green_start_s=None, n_cycles=1,
                     warm_up_cycles=50):
        """Build a grid from timings in seconds; red comes first by default."""
        C = _steps(cycle_s, delta_t, "cycle length")
        g = _steps(green_s, delta_t, "green time")
        gs = C - g if green_start_s is None else _steps(green_start_s, delta_t, "green start")
        return cls(delta_t, C, gs, g, C * int(n_cycles), warm_up_cycles)

    @property
    def n_cycles(self) -> int:
        return self.horizon // self.cycle_len

    @property
    def red_len(self) -> int:
        return self.cycle_len - self.green_len

    def with_horizon(self, n_cycles: int) -> "DiscreteGrid":
        return DiscreteGrid(self.delta_t, self.cycle_len, self.green_start, self.green_len,
                            self.cycle_len * int(n_cycles), self.warm_up_cycles)

    def position(self, t):
        """In-cycle position (0-based) of 1-based step ``t``."""
        return (np.asarray(t) - 1) % self.cycle_len

    def cycle_signal(self) -> np.ndarray:
        s = np.zeros(self.cycle_len, dtype=np.uint8)
        s[self.green_start:self.green_start + self.green_len] = 1
        return s

    def cycle_elapsed_green(self) -> np.ndarray:
        g = np.zeros(self.cycle_len, dtype=np.int64)
        g[self.green_start:self.green_start + self.green_len] = np.arange(self.green_len)
        return g

    def signal(self, horizon=None) -> np.ndarray:
        """S(t) for t = 1..horizon (1 = green)."""
        n = self.horizon if horizon is None else horizon
        return np.resize(self.cycle_signal(), n)

    def elapsed_green_array(self, horizon=None) -> np.ndarray:
        n = self.horizon if horizon is None else horizon
        return np.resize(self.cycle_elapsed_green(), n)

    def green_onset_steps(self, horizon=None) -> np.ndarray:
        """Step whose end-of-step queue is the queue at each cycle's green onset."""
        n = self.horizon if horizon is None else horizon
        return np.arange(n // self.cycle_len) * self.cycle_len + self.green_start


class ArrivalProfile:
    """Cyclic per-step arrival probability a(t)."""

    def cycle_rates(self, cycle_len: int) -> np.ndarray:
        raise NotImplementedError

    def per_step(self, grid: DiscreteGrid, horizon=None) -> np.ndarray:
        """a(t) for t = 1..horizon."""
        n = grid.horizon if horizon is None else horizon
        return np.resize(self.cycle_rates(grid.cycle_len), n)

    @property
    def params(self) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ArrivalProfile):
    mu: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 1.0:
            raise ValueError(f"arrival probability must be in [0, 1], got {self.mu}")

    def cycle_rates(self, cycle_len):
        return np.full(cycle_len, float(self.mu))

    @property
    def params(self):
        return np.array([self.mu], dtype=float)


@dataclass(frozen=True, init=False)
class PiecewiseConstant(ArrivalProfile):
    """Rate ``rates[i]`` on in-cycle positions ``[breakpoints[i], breakpoints[i+1])``.

    The last segment runs to the end of the cycle.
    """

    breakpoints: tuple
    rates: tuple

    def __init__(self, breakpoints, rates):
        bp = tuple(int(b) for b in breakpoints)
        rt = tuple(float(r) for r in rates)
        if len(bp) != len(rt) or not bp:
            raise ValueError("need one rate per segment")
        if bp[0] != 0 or any(b1 <= b0 for b0, b1 in zip(bp, bp[1:])):
            raise ValueError(f"breakpoints must start at 0 and increase strictly: {bp}")
        if any(not 0.0 <= r <= 1.0 for r in rt):
            raise ValueError(f"segment rates must lie in [0, 1]: {rt}")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "rates", rt)

    def cycle_rates(self, cycle_len):
        if self.breakpoints[-1] >= cycle_len:
            raise ValueError(f"breakpoint {self.breakpoints[-1]} outside cycle of {cycle_len}")
        edges = list(self.breakpoints) + [cycle_len]
        out = np.empty(cycle_len)
        for r, lo, hi in zip(self.rates, edges, edges[1:]):
            out[lo:hi] = r
        return out

    def segment_lengths(self, cycle_len):
        edges = np.array(list(self.breakpoints) + [cycle_len])
        return np.diff(edges)

    @property
    def params(self):
        return np.array(self.rates, dtype=float)


def arrival_prob(profile: ArrivalProfile, t: int, grid: DiscreteGrid) -> float:
    """a(t) for 1-based step ``t``; periodic with period ``cycle_len``."""
    return float(profile.cycle_rates(grid.cycle_len)[grid.position(t)])


@dataclass(frozen=True)
class TrafficParams:
    profile_params: np.ndarray
    phi: float

    def __post_init__(self):
        if not 0.0 < self.phi <= 1.0:
            raise ValueError(f"penetration rate must be in (0, 1], got {self.phi}")
        p = np.atleast_1d(np.asarray(self.profile_params, dtype=float))
        if np.any((p < 0) | (p > 1)):
            raise ValueError("arrival parameters must be per-step probabilities in [0, 1]")
        object.__setattr__(self, "profile_params", p)


@dataclass
class QueuePmf:
    """Distribution of the point queue over ``k = 0..k_max``."""

    mass: np.ndarray

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if self.mass.ndim != 1 or self.mass.size < 2:
            raise ValueError("pmf needs at least two support points")

    @classmethod
    def delta(cls, k: int, k_max: int) -> "QueuePmf":
        m = np.zeros(k_max + 1)
        m[k] = 1.0
        return cls(m)

    @property
    def k_max(self) -> int:
        return self.mass.size - 1

    def mean(self) -> float:
        return float(np.dot(np.arange(self.mass.size), self.mass))

    def var(self) -> float:
        k = np.arange(self.mass.size)
        m = self.mean()
        return float(np.dot((k - m) ** 2, self.mass))

    def is_normalized(self, tol=PMF_TOL) -> bool:
        return bool(np.all(self.mass >= 0) and abs(self.mass.sum() - 1.0) <= tol)


def step_pmf(x_prev: QueuePmf, a: float, green: bool):
    """One transition of the queue pmf.

    Returns ``(x_next, x_interim, b)``: the post-departure pmf, the
    post-arrival pmf, and the departure probability.
    """
    x = x_prev.mass
    kmax = x.size - 1
    xp = np.empty_like(x)
    xp[0] = x[0] * (1.0 - a)
    xp[1:] = x[:-1] * a + x[1:] * (1.0 - a)
    if xp[kmax] >= _kernels.TAIL_TOL:
        raise TruncationOverflow(f"mass {xp[kmax]:.3g} at truncation cap k_max={kmax}")
    xp /= xp.sum()
    if green:
        b = float(xp[1:].sum())
        xn = np.zeros_like(xp)
        xn[0] = xp[0] + xp[1]
        xn[1:kmax] = xp[2:]
    else:
        b = 0.0
        xn = xp.copy()
    return QueuePmf(xn), QueuePmf(xp), b


def psi(x, elapsed_green):
    """Point queue -> spatial queue (vehicle units)."""
    return np.add(x, elapsed_green)


def psi_inv(xs, elapsed_green):
    """Spatial queue -> point queue; exact inverse of :func:`psi`."""
    return np.subtract(xs, elapsed_green)


def elapsed_green(t: int, grid: DiscreteGrid) -> int:
    """Green steps completed in the current green phase before step ``t``; 0 in red."""
    return int(grid.cycle_elapsed_green()[grid.position(t)])


def propagate(init: np.ndarray, rates: np.ndarray, signal: np.ndarray) -> np.ndarray:
    """Unconditional pmf after each step; row ``i`` is the pmf after step ``i + 1``."""
    T = rates.shape[0]
    zeros = np.zeros(T, dtype=np.uint8)
    kw = np.ones(1)
    out = _kernels.forward(np.ascontiguousarray(rates, dtype=float),
                           np.ascontiguousarray(signal, dtype=np.uint8),
                           zeros, np.zeros(T, dtype=np.int64),
                           np.ascontiguousarray(init, dtype=float), 0.0, kw, 0, True, False)
    if out[2] == _kernels.FAIL_OVERFLOW:
        raise TruncationOverflow(f"queue pmf reached k_max at step {out[1] + 1}")
    return out[4]


@dataclass
class StationaryResult:
    pmf: QueuePmf
    cycles: int
    converged: bool


def stationary_cycle_start(profile: ArrivalProfile, grid: DiscreteGrid, k_max=None,
                           tol=1e-8, max_cycles=200, full=False):
    """Fixed point of the whole-cycle pmf map, started from an empty queue.

    Emits :class:`SaturationWarning` (and returns the last iterate) when the
    L1 change has not dropped below ``tol`` after ``max_cycles`` cycles.
    Raises :class:`TruncationOverflow` when the queue runs into ``k_max``.
    """
    k_max = grid.cycle_len if k_max is None else k_max
    rates = profile.cycle_rates(grid.cycle_len)
    signal = grid.cycle_signal()
    zeros = np.zeros(grid.cycle_len, dtype=np.uint8)
    zi = np.zeros(grid.cycle_len, dtype=np.int64)
    kw = np.ones(1)
    x = np.zeros(k_max + 1)
    x[0] = 1.0
    converged = False
    n = 0
    for n in range(1, max_cycles + 1):
        out = _kernels.forward(rates, signal, zeros, zi, x, 0.0, kw, 0, False, False)
        if out[2] == _kernels.FAIL_OVERFLOW:
            raise TruncationOverflow(f"queue pmf reached k_max={k_max} during warm-up")
        x_new = out[3]
        diff = np.abs(x_new - x).sum()
        x = x_new
        if diff < tol:
            converged = True
            break
    if not converged:
        warnings.warn(
            f"cycle-start pmf not stationary after {max_cycles} cycles (L1 change {diff:.2e}); "
            "demand may be near saturation", SaturationWarning, stacklevel=2)
    res = StationaryResult(QueuePmf(x), n, converged)
    return res if full else res.pmf


def average_volume(profile: ArrivalProfile, grid: DiscreteGrid) -> float:
    """Cycle-average arrival rate in veh/h (one arrival = one vehicle)."""
    if isinstance(profile, PiecewiseConstant):
        lengths = profile.segment_lengths(grid.cycle_len)
        per_step = float(np.dot(profile.params, lengths) / grid.cycle_len)
    else:
        per_step = float(profile.cycle_rates(grid.cycle_len).mean())
    return per_step * 3600.0 / grid.delta_t


def rate_to_vph(rate, delta_t):
    return np.asarray(rate) * 3600.0 / delta_t


def vph_to_rate(vph, delta_t):
    return np.asarray(vph) * delta_t / 3600.0


def expected_arrivals_per_cycle(profile: ArrivalProfile, grid: DiscreteGrid) -> float:
    return float(profile.cycle_rates(grid.cycle_len).sum())


def is_undersaturated(profile, grid) -> bool:
    return expected_arrivals_per_cycle(profile, grid) < grid.green_len


__all__ = [
    "DiscreteGrid", "ArrivalProfile", "Uniform", "PiecewiseConstant", "TrafficParams",
    "QueuePmf", "delta_t_for_unit_flow", "arrival_prob", "step_pmf", "psi", "psi_inv",
    "elapsed_green", "stationary_cycle_start", "average_volume", "propagate",
    "rate_to_vph", "vph_to_rate",
]
