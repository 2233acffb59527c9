"""Ground-truth generator: hidden arrivals and queues, observed subsets, trajectories.

Hidden dynamics are sampled straight from the point-queue model, so data
generated here follows the filter's likelihood exactly. Trajectories use
two-state Newell kinematics: free flow at ``v_f``, one stop at the back of
the queue, discharge in FIFO order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import LinkOverflow
from .observation import ABSENT, GaussKernel, GeometryParams, ObservationSeq, RawTrajectory
from .pts_core import ArrivalProfile, DiscreteGrid

ROLE_HIDDEN = 0
ROLE_OBSERVE = 1
ROLE_NOISE = 2
ROLE_FIT = 3


def stream(seed: int, replication: int, role: int) -> np.random.Generator:
    """Independent Philox stream keyed by (seed, replication, role)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replication), int(role)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SimConfig:
    grid: DiscreteGrid
    profile: ArrivalProfile
    phi: float
    geom: GeometryParams
    kernel: GaussKernel
    seed: int
    replications: int = 1
    sample_dt: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.phi <= 1.0:
            raise ValueError(f"penetration rate must be in [0, 1], got {self.phi}")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")


@dataclass
class GroundTruth:
    arrivals: np.ndarray
    departures: np.ndarray
    queues: np.ndarray
    signal: np.ndarray
    elapsed_green: np.ndarray
    x0: int
    max_queue_per_cycle: np.ndarray
    trajectories: list = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return int(self.arrivals.size)

    def queue_before(self) -> np.ndarray:
        """X(t-1) for t = 1..T."""
        return np.concatenate(([self.x0], self.queues[:-1]))

    def spatial_stop(self) -> np.ndarray:
        """Stop location (vehicles ahead, spatial units) for a vehicle arriving at each step.

        Zero where an arrival would pass without stopping.
        """
        prev = self.queue_before()
        stops = (self.signal == 0) | (prev >= 1)
        return np.where(stops, prev + self.elapsed_green, 0).astype(np.int64)

    def truncate(self, horizon: int, grid: DiscreteGrid) -> "GroundTruth":
        n = horizon // grid.cycle_len
        return GroundTruth(self.arrivals[:horizon], self.departures[:horizon],
                           self.queues[:horizon], self.signal[:horizon],
                           self.elapsed_green[:horizon], self.x0,
                           self.max_queue_per_cycle[:n])


def _max_queue(queues, x0, grid, horizon):
    ext = np.concatenate(([x0], queues))
    return ext[grid.green_onset_steps(horizon)].astype(np.int64)


def simulate_hidden(config: SimConfig, rng: np.random.Generator, horizon=None) -> GroundTruth:
    grid = config.grid
    T = grid.horizon if horizon is None else int(horizon)
    warm = grid.warm_up_cycles * grid.cycle_len
    total = warm + T
    a = config.profile.per_step(grid, total)
    arrivals = (rng.random(total) < a).astype(np.uint8)
    signal = grid.signal(total)
    X, B = _kernels.simulate_queue(arrivals, signal, 0)
    if X.size and X.max() > config.geom.capacity:
        t = int(np.argmax(X > config.geom.capacity)) - warm + 1
        raise LinkOverflow(f"queue {X.max()} exceeds link storage {config.geom.capacity:.1f} "
                           f"(step {t})")
    x0 = int(X[warm - 1]) if warm else 0
    q = X[warm:].astype(np.int64)
    truth = GroundTruth(arrivals[warm:].copy(), B[warm:].copy(), q, signal[warm:].copy(),
                        grid.elapsed_green_array(T), x0, _max_queue(q, x0, grid, T))
    return truth


def departure_steps(truth: GroundTruth) -> np.ndarray:
    """Departure step of each in-horizon arrival (FIFO), or -1 if still queued at T."""
    arr_steps = np.flatnonzero(truth.arrivals) + 1
    vehicle_no = truth.x0 + np.arange(1, arr_steps.size + 1)
    cum_dep = np.cumsum(truth.departures)
    idx = np.searchsorted(cum_dep, vehicle_no, side="left")
    return np.where(idx < truth.horizon, idx + 1, -1)


def _trajectory(vid, t_arr, delay, x_spatial, geom, delta_t, sample_dt, t_end):
    # delay: queued steps; 0 = passes without stopping; None = still queued at t_end
    tau_star = t_arr * delta_t
    stopped = delay != 0
    d_stop = float(geom.to_meters(x_spatial)) if stopped else 0.0
    start_d = max(geom.link_len, d_stop + 2 * geom.v_f * sample_dt + 1.0)
    tail = 10.0
    if stopped:
        tau_s = tau_star - d_stop / geom.v_f
        tau_e = t_end if delay is None else tau_s + delay * delta_t
        tau_0 = tau_s - (start_d - d_stop) / geom.v_f
        tau_1 = tau_e + (d_stop + tail) / geom.v_f
        marks = [tau_0, tau_s, tau_e, tau_1]
    else:
        tau_0 = tau_star - start_d / geom.v_f
        tau_1 = tau_star + tail / geom.v_f
        marks = [tau_0, tau_1]
    k = np.arange(np.ceil(tau_0 / sample_dt), np.floor(tau_1 / sample_dt) + 1)
    times = np.union1d(k * sample_dt, marks)
    times = times[np.concatenate(([True], np.diff(times) > 1e-6))]
    if stopped:
        d = np.where(times <= tau_s, d_stop + geom.v_f * (tau_s - times),
                     np.where(times <= tau_e, d_stop, d_stop - geom.v_f * (times - tau_e)))
    else:
        d = geom.v_f * (tau_star - times)
    return RawTrajectory(vid, times, d)


def synthesize_trajectories(truth: GroundTruth, geom: GeometryParams, grid: DiscreteGrid,
                            steps=None, sample_dt=0.5, prefix="veh") -> list[RawTrajectory]:
    """Newell trajectories for the vehicles arriving at ``steps`` (default: all)."""
    arr_steps = np.flatnonzero(truth.arrivals) + 1
    dep = departure_steps(truth)
    x_sp = truth.spatial_stop()
    wanted = None if steps is None else set(int(s) for s in steps)
    t_end = (truth.horizon + 1) * grid.delta_t
    out = []
    for t, dstep in zip(arr_steps, dep):
        if wanted is not None and t not in wanted:
            continue
        delay = None if dstep < 0 else int(dstep - t)
        out.append(_trajectory(f"{prefix}{t:06d}", int(t), delay, int(x_sp[t - 1]), geom,
                               grid.delta_t, sample_dt, t_end))
    return out


def simulate_observations(truth: GroundTruth, phi: float, kernel: GaussKernel,
                          rng: np.random.Generator, noise_rng=None, geom=None, grid=None,
                          sample_dt=0.5):
    """Observe each vehicle with probability ``phi``.

    The observed point queue is ``max(0, X(t-1) + c)`` with ``c`` drawn from
    the kernel; it is reported in spatial units by adding the elapsed green
    time (0 stays 0). Raw trajectories, returned when ``geom`` and ``grid``
    are given, are the noise-free paths of the observed vehicles.
    """
    noise_rng = rng if noise_rng is None else noise_rng
    T = truth.horizon
    seen = (truth.arrivals == 1) & (rng.random(T) < phi)
    a = seen.astype(np.uint8)
    x = np.full(T, ABSENT, dtype=np.int64)
    idx = np.flatnonzero(seen)
    h = kernel.half_width
    if h:
        c = noise_rng.choice(np.arange(-h, h + 1), size=idx.size, p=kernel.weights)
    else:
        c = np.zeros(idx.size, dtype=np.int64)
    pt = np.maximum(truth.queue_before()[idx] + c, 0)
    x[idx] = np.where(pt >= 1, pt + truth.elapsed_green[idx], 0)
    obs = ObservationSeq(a, x)
    trajs = []
    if geom is not None and grid is not None:
        trajs = synthesize_trajectories(truth, geom, grid, idx + 1, sample_dt)
    return obs, trajs


@dataclass
class Replication:
    index: int
    truth: GroundTruth
    obs: ObservationSeq
    observed_trajectories: list = field(default_factory=list)


def simulate_replication(config: SimConfig, r: int, horizon=None, trajectories=False,
                         phi=None) -> Replication:
    truth = simulate_hidden(config, stream(config.seed, r, ROLE_HIDDEN), horizon)
    obs, trajs = simulate_observations(
        truth, config.phi if phi is None else phi, config.kernel,
        stream(config.seed, r, ROLE_OBSERVE), stream(config.seed, r, ROLE_NOISE),
        config.geom if trajectories else None, config.grid, config.sample_dt)
    return Replication(r, truth, obs, trajs)


def generate_dataset(config: SimConfig, horizon=None, trajectories=False) -> list[Replication]:
    """All replications; replication ``r`` only depends on ``(seed, r)``."""
    return [simulate_replication(config, r, horizon, trajectories)
            for r in range(config.replications)]
