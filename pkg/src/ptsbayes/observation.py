"""Observation model and trajectory encoding.

An observed trajectory contributes two things at its free-flow arrival step
``t``: the flag ``a_tilde[t] = 1`` and the spatial stop location
``x_tilde_s[t]`` in vehicle units, measured from the stop bar to the
vehicle's front bumper. A vehicle that never stops reports 0.

The spatial location counts the vehicles ahead of the observed one, so its
point-queue counterpart is the queue the vehicle found on arrival,
``X(t-1)``. A location below the elapsed green time maps to point queue 0.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EncodeCollisionError
from .pts_core import DiscreteGrid

ABSENT = -1
STOP_SPEED = 1.0  # m/s
STOP_DEBOUNCE = 2  # consecutive samples


class SkippedTrajectoryWarning(UserWarning):
    pass


@dataclass(frozen=True)
class GaussKernel:
    """Normalized discrete Gaussian on offsets ``-half_width..half_width``."""

    sigma: float
    half_width: int
    weights: np.ndarray = field(repr=False)

    def __call__(self, c) -> np.ndarray | float:
        c = np.asarray(c)
        inside = np.abs(c) <= self.half_width
        idx = np.where(inside, c + self.half_width, 0)
        out = np.where(inside, self.weights[idx], 0.0)
        return float(out) if out.ndim == 0 else out


def kernel_build(sigma: float, half_width: int) -> GaussKernel:
    if half_width < 0 or int(half_width) != half_width:
        raise ValueError(f"half_width must be a non-negative integer, got {half_width}")
    h = int(half_width)
    if h == 0:
        return GaussKernel(float(sigma), 0, np.ones(1))
    if not sigma > 0:
        raise ValueError(f"sigma must be positive when half_width > 0, got {sigma}")
    c = np.arange(-h, h + 1, dtype=float)
    w = np.exp(-0.5 * (c / sigma) ** 2)
    w /= w.sum()
    # exact symmetry regardless of summation order
    w = 0.5 * (w + w[::-1])
    return GaussKernel(float(sigma), h, w)


def obs_arrival_prob(A: int, A_tilde: int, phi: float) -> float:
    """p(A_tilde | A, phi)."""
    if A:
        return phi if A_tilde else 1.0 - phi
    return 0.0 if A_tilde else 1.0


def obs_queue_prob(x_true_spatial, x_obs, A_tilde, kernel: GaussKernel) -> float:
    """p(x_obs | true spatial queue): certain absence when nothing is observed."""
    if not A_tilde:
        return 1.0 if x_obs is None or x_obs == ABSENT else 0.0
    return kernel(x_obs - x_true_spatial)


def censored_obs_prob(j: int, m: int, kernel: GaussKernel) -> float:
    """p(observed point queue = j | vehicles ahead = m) for ``j = max(0, m + c)``, c ~ kernel."""
    if j >= 1:
        return kernel(j - m)
    h = kernel.half_width
    return float(sum(kernel(c) for c in range(-h, -m + 1)))


@dataclass
class ObservationSeq:
    """Per-step observed arrival flags and spatial stop locations."""

    a_tilde: np.ndarray
    x_tilde: np.ndarray

    def __post_init__(self):
        self.a_tilde = np.asarray(self.a_tilde, dtype=np.uint8)
        self.x_tilde = np.asarray(self.x_tilde, dtype=np.int64)
        if self.a_tilde.shape != self.x_tilde.shape or self.a_tilde.ndim != 1:
            raise ValueError("a_tilde and x_tilde must be 1-D arrays of equal length")
        present = self.x_tilde != ABSENT
        if np.any(present != (self.a_tilde == 1)):
            raise ValueError("x_tilde must be present exactly where a_tilde == 1")
        if np.any(self.x_tilde[present] < 0):
            raise ValueError("observed stop locations must be >= 0")

    @classmethod
    def empty(cls, horizon: int) -> "ObservationSeq":
        return cls(np.zeros(horizon, np.uint8), np.full(horizon, ABSENT, np.int64))

    @property
    def horizon(self) -> int:
        return int(self.a_tilde.size)

    @property
    def n_observed(self) -> int:
        return int(self.a_tilde.sum())

    def point_queue(self, elapsed_green: np.ndarray):
        """Observed point queue (vehicles ahead) per step and the number of clamped steps."""
        raw = np.where(self.a_tilde == 1, self.x_tilde - elapsed_green, 0)
        # a reported 0 means "did not stop", which is not a clamp
        clamped = int(np.sum((self.a_tilde == 1) & (self.x_tilde > 0) & (raw < 0)))
        return np.maximum(raw, 0).astype(np.int64), clamped

    def truncate(self, horizon: int) -> "ObservationSeq":
        return ObservationSeq(self.a_tilde[:horizon].copy(), self.x_tilde[:horizon].copy())

    def __eq__(self, other):
        if not isinstance(other, ObservationSeq):
            return NotImplemented
        return (np.array_equal(self.a_tilde, other.a_tilde)
                and np.array_equal(self.x_tilde, other.x_tilde))


@dataclass(frozen=True)
class GeometryParams:
    v_f: float = 15.0
    s_jam: float = 7.5
    lanes: int = 2
    link_len: float = 250.0

    def __post_init__(self):
        if not (self.v_f > 0 and self.s_jam > 0 and self.lanes >= 1 and self.link_len > 0):
            raise ConfigError("geometry parameters must all be positive")

    @property
    def capacity(self) -> float:
        """Vehicles the link can hold at jam spacing."""
        return self.link_len * self.lanes / self.s_jam

    def to_vehicles(self, distance_m):
        return np.rint(np.asarray(distance_m) * self.lanes / self.s_jam).astype(np.int64)

    def to_meters(self, vehicles):
        return np.asarray(vehicles, dtype=float) * self.s_jam / self.lanes


@dataclass
class RawTrajectory:
    vehicle_id: str
    time: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        self.distance = np.asarray(self.distance, dtype=float)
        if self.time.shape != self.distance.shape:
            raise ValueError("time and distance must have equal length")
        if np.any(np.diff(self.time) <= 0):
            raise ValueError(f"trajectory {self.vehicle_id}: samples must be strictly time-ordered")
        if not np.all(np.isfinite(self.distance)):
            raise ValueError(f"trajectory {self.vehicle_id}: non-finite distance")


@dataclass(frozen=True)
class Stop:
    vehicle_id: str
    time: float
    distance: float
    x_spatial: int


@dataclass
class EncodeDiagnostics:
    encoded: int = 0
    skipped: list = field(default_factory=list)
    second_stops: list = field(default_factory=list)
    out_of_window: int = 0


def _find_stops(traj: RawTrajectory, stop_speed: float, debounce: int):
    """Indices of the first sample of each sustained stop."""
    t, d = traj.time, traj.distance
    if t.size < 2:
        return []
    speed = np.empty(t.size)
    speed[0] = np.inf
    speed[1:] = np.abs(np.diff(d)) / np.diff(t)
    slow = speed < stop_speed
    stops = []
    i = 1
    n = t.size
    while i <= n - debounce:
        if slow[i:i + debounce].all():
            stops.append(i)
            while i < n and slow[i]:
                i += 1
        else:
            i += 1
    return stops


def encode_with_diagnostics(trajs, geom: GeometryParams, grid: DiscreteGrid,
                            horizon: int | None = None, stop_speed=STOP_SPEED,
                            debounce=STOP_DEBOUNCE):
    T = grid.horizon if horizon is None else horizon
    a = np.zeros(T, dtype=np.uint8)
    x = np.full(T, ABSENT, dtype=np.int64)
    owner = {}
    diag = EncodeDiagnostics()
    for traj in trajs:
        stops = _find_stops(traj, stop_speed, debounce)
        if stops:
            i = stops[0]
            if i < 2 or traj.distance[i - 1] < 0:
                # the sample before the stop cannot anchor a free-flow arrival
                diag.skipped.append(traj.vehicle_id)
                continue
            t0, d0 = traj.time[i - 1], traj.distance[i - 1]
            x_s = max(0, int(geom.to_vehicles(traj.distance[i])))
            for j in stops[1:]:
                if traj.distance[j] >= 0:
                    diag.second_stops.append(Stop(traj.vehicle_id, float(traj.time[j]),
                                                  float(traj.distance[j]),
                                                  max(0, int(geom.to_vehicles(traj.distance[j])))))
        else:
            upstream = np.flatnonzero(traj.distance >= 0)
            if upstream.size == 0:
                diag.skipped.append(traj.vehicle_id)
                continue
            k = upstream[-1]
            t0, d0 = traj.time[k], traj.distance[k]
            x_s = 0
        step = int(round((t0 + d0 / geom.v_f) / grid.delta_t))
        if not 1 <= step <= T:
            diag.out_of_window += 1
            continue
        if a[step - 1]:
            raise EncodeCollisionError(step, [owner[step], traj.vehicle_id])
        a[step - 1] = 1
        x[step - 1] = x_s
        owner[step] = traj.vehicle_id
        diag.encoded += 1
    if diag.skipped:
        warnings.warn(f"skipped {len(diag.skipped)} trajectories without a usable pre-stop sample",
                      SkippedTrajectoryWarning, stacklevel=2)
    return ObservationSeq(a, x), diag


def encode(trajs, geom: GeometryParams, grid: DiscreteGrid, horizon=None) -> ObservationSeq:
    """Encode raw trajectories into per-step (a_tilde, x_tilde_s)."""
    return encode_with_diagnostics(trajs, geom, grid, horizon)[0]


# -- CSV formats -------------------------------------------------------------

TRAJ_HEADER = ["vehicle_id", "time_s", "distance_m"]
OBS_HEADER = ["t", "a_tilde", "x_tilde_s"]


def read_trajectories_csv(path) -> list[RawTrajectory]:
    path = Path(path)
    groups: dict[str, tuple[list, list]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return []
        if [h.strip() for h in header] != TRAJ_HEADER:
            raise ConfigError(f"expected header {','.join(TRAJ_HEADER)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                raise ConfigError(f"expected 3 fields, got {len(row)}", path, line)
            vid = row[0].strip()
            try:
                t, d = float(row[1]), float(row[2])
            except ValueError:
                raise ConfigError(f"non-numeric time or distance: {row!r}", path, line) from None
            if not (math.isfinite(t) and math.isfinite(d)):
                raise ConfigError("non-finite time or distance", path, line)
            ts, ds = groups.setdefault(vid, ([], []))
            if ts and t <= ts[-1]:
                raise ConfigError(f"vehicle {vid}: samples not strictly time-ordered", path, line)
            ts.append(t)
            ds.append(d)
    return [RawTrajectory(vid, ts, ds) for vid, (ts, ds) in groups.items()]


def write_trajectories_csv(trajs, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER)
        for tr in trajs:
            for t, d in zip(tr.time, tr.distance):
                w.writerow([tr.vehicle_id, f"{t:.6f}", f"{d:.6f}"])


def write_observations_csv(obs: ObservationSeq, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_HEADER)
        for i in range(obs.horizon):
            xs = "" if obs.a_tilde[i] == 0 else str(int(obs.x_tilde[i]))
            w.writerow([i + 1, int(obs.a_tilde[i]), xs])


def read_observations_csv(path) -> ObservationSeq:
    path = Path(path)
    a, x = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return ObservationSeq.empty(0)
        if [h.strip() for h in header] != OBS_HEADER:
            raise ConfigError(f"expected header {','.join(OBS_HEADER)}", path, 1)
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            try:
                t, at = int(row[0]), int(row[1])
                xs = row[2].strip() if len(row) > 2 else ""
                xv = ABSENT if xs == "" else int(xs)
            except (ValueError, IndexError):
                raise ConfigError(f"malformed observation row {row!r}", path, line) from None
            if t != len(a) + 1:
                raise ConfigError(f"expected t = {len(a) + 1}, got {t}", path, line)
            if at not in (0, 1) or (at == 1) != (xv != ABSENT) or (at == 1 and xv < 0):
                raise ConfigError("a_tilde must be 0/1 with x_tilde_s present exactly when 1",
                                  path, line)
            a.append(at)
            x.append(xv)
    return ObservationSeq(np.array(a, dtype=np.uint8), np.array(x, dtype=np.int64))
