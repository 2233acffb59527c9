import time

import numpy as np
import pytest

from ptsbayes.errors import LinkOverflow
from ptsbayes.observation import GeometryParams, kernel_build
from ptsbayes.pts_core import DiscreteGrid, PiecewiseConstant, Uniform, stationary_cycle_start, vph_to_rate
from ptsbayes.simulator import (SimConfig, departure_steps, generate_dataset, simulate_hidden,
                                simulate_replication, stream)

GEOM = GeometryParams()
K2 = kernel_build(1.0, 2)


def table1(n_cycles=40, vph=720, phi=0.1, kernel=K2, seed=1, reps=1):
    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=n_cycles)
    return SimConfig(grid, Uniform(float(vph_to_rate(vph, 1.0))), phi, GEOM, kernel, seed, reps)


def test_empty_demand(backend):
    cfg = table1(vph=0)
    rep = simulate_replication(cfg, 0, trajectories=True)
    assert rep.truth.queues.max() == 0 and rep.truth.arrivals.sum() == 0
    assert rep.observed_trajectories == []


def test_red_only_arrivals_build_queue_of_red_length(backend):
    grid = DiscreteGrid(1.0, 12, 5, 7, 36, warm_up_cycles=2)
    cfg = SimConfig(grid, PiecewiseConstant([0, 5], [1.0, 0.0]), 0.5, GEOM, K2, seed=0)
    truth = simulate_hidden(cfg, stream(0, 0, 0))
    np.testing.assert_array_equal(truth.max_queue_per_cycle, [5, 5, 5])
    np.testing.assert_array_equal(truth.queues[:12], [1, 2, 3, 4, 5, 4, 3, 2, 1, 0, 0, 0])


def test_table1_runs_without_overflow():
    rep = simulate_replication(table1(n_cycles=320), 0)
    assert rep.truth.queues.max() < GEOM.capacity


def test_overflow_detected():
    grid = DiscreteGrid(1.0, 90, 85, 5, 90, warm_up_cycles=1)
    cfg = SimConfig(grid, Uniform(0.9), 0.1, GeometryParams(link_len=50.0), K2, seed=0)
    with pytest.raises(LinkOverflow):
        simulate_hidden(cfg, stream(0, 0, 0))


def test_full_noise_free_observation_equals_truth():
    rep = simulate_replication(table1(kernel=kernel_build(1.0, 0), phi=1.0), 0)
    np.testing.assert_array_equal(rep.obs.a_tilde, rep.truth.arrivals)
    on = rep.truth.arrivals == 1
    np.testing.assert_array_equal(rep.obs.x_tilde[on], rep.truth.spatial_stop()[on])


def test_zero_penetration_observes_nothing():
    rep = simulate_replication(table1(), 0, phi=0.0)
    assert rep.obs.n_observed == 0


def test_observed_count_binomial_mean():
    cfg = table1(phi=0.1, reps=500)
    counts = np.array([r.obs.n_observed for r in generate_dataset(cfg)])
    # expected 0.1 * 720 veh/h * 1 h = 72; each step is observed w.p. a * phi = 0.02
    var = 3600 * 0.02 * 0.98
    assert abs(counts.mean() - 72.0) < 3 * np.sqrt(var / 500)


def test_dataset_determinism():
    cfg = table1(reps=3, seed=99)
    a = generate_dataset(cfg, trajectories=True)
    b = generate_dataset(cfg, trajectories=True)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.truth.arrivals, y.truth.arrivals)
        assert x.obs == y.obs
        for s, t in zip(x.observed_trajectories, y.observed_trajectories):
            np.testing.assert_array_equal(s.distance, t.distance)
    assert not np.array_equal(a[0].truth.arrivals, a[1].truth.arrivals)


def test_replication_independent_of_count():
    one = generate_dataset(table1(reps=1, seed=5))[0]
    many = generate_dataset(table1(reps=4, seed=5))[0]
    assert one.obs == many.obs


def test_dataset_runtime_budget():
    cfg = table1(n_cycles=320, reps=500)
    t0 = time.perf_counter()
    data = generate_dataset(cfg)
    assert len(data) == 500
    assert time.perf_counter() - t0 < 300


# -- invariants ---------------------------------------------------------------

def test_queue_dynamics_invariants(backend):
    rep = simulate_replication(table1(n_cycles=200), 0)
    tr = rep.truth
    X = np.concatenate(([tr.x0], tr.queues))
    assert X.min() >= 0 and np.abs(np.diff(X)).max() <= 1
    assert np.all(tr.departures[tr.signal == 0] == 0)
    np.testing.assert_array_equal(np.diff(X), tr.arrivals.astype(int) - tr.departures)
    # a departure happens on green whenever the post-arrival queue is non-empty
    post_arrival = X[:-1] + tr.arrivals
    np.testing.assert_array_equal(tr.departures, (tr.signal == 1) & (post_arrival >= 1))


def test_arrival_frequency_per_phase():
    grid = DiscreteGrid(1.0, 90, 55, 35, 90 * 2000, warm_up_cycles=1)
    prof = PiecewiseConstant([0, 30, 60], [0.1, 0.3, 0.2])
    cfg = SimConfig(grid, prof, 0.1, GeometryParams(link_len=2000.0), K2, seed=4)
    tr = simulate_hidden(cfg, stream(4, 0, 0))
    pos = grid.position(np.arange(1, grid.horizon + 1))
    for lo, hi, p in [(0, 30, 0.1), (30, 60, 0.3), (60, 90, 0.2)]:
        sel = (pos >= lo) & (pos < hi)
        n = sel.sum()
        assert abs(tr.arrivals[sel].mean() - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_cycle_start_histogram_matches_stationary():
    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=12_000, warm_up_cycles=50)
    prof = Uniform(0.3)
    cfg = SimConfig(grid, prof, 0.1, GEOM, K2, seed=8)
    tr = simulate_hidden(cfg, stream(8, 0, 0))
    X = np.concatenate(([tr.x0], tr.queues))
    starts = X[np.arange(grid.n_cycles) * grid.cycle_len]
    pmf = stationary_cycle_start(prof, grid).mass
    emp = np.bincount(starts, minlength=pmf.size)[: pmf.size] / starts.size
    assert 0.5 * np.abs(emp - pmf).sum() < 0.02


def test_observed_fraction_within_binomial_band():
    cfg = table1(phi=0.2, reps=50)
    data = generate_dataset(cfg)
    n_arr = sum(int(r.truth.arrivals.sum()) for r in data)
    n_obs = sum(r.obs.n_observed for r in data)
    assert abs(n_obs / n_arr - 0.2) < 3 * np.sqrt(0.2 * 0.8 / n_arr)


def test_trajectories_follow_fifo_departures():
    rep = simulate_replication(table1(phi=1.0, n_cycles=4), 0, trajectories=True)
    dep = departure_steps(rep.truth)
    # stop-bar crossing times are non-decreasing in arrival order
    crossings = []
    for tr in rep.observed_trajectories:
        i = np.flatnonzero(tr.distance <= 0)
        crossings.append(tr.time[i[0]] if i.size else np.inf)
    assert np.all(np.diff(crossings) >= -1e-9)
    assert len(crossings) == dep.size
