"""Time the compiled and pure-numpy forward recursion and queue simulator.

    python benchmarks/bench_kernels.py [--hours 8] [--repeat 5]
"""
import argparse
import time

import numpy as np

from ptsbayes import _accel, _kernels
from ptsbayes.observation import GeometryParams, kernel_build
from ptsbayes.pts_core import DiscreteGrid, Uniform, stationary_cycle_start, vph_to_rate
from ptsbayes.simulator import SimConfig, simulate_replication


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--hours", type=float, default=8.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--phi", type=float, default=0.1)
    args = ap.parse_args()

    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=int(args.hours * 40))
    T = grid.horizon
    mu = float(vph_to_rate(720, 1.0))
    kernel = kernel_build(1.0, 2)
    cfg = SimConfig(grid, Uniform(mu), args.phi, GeometryParams(), kernel, seed=1)
    rep = simulate_replication(cfg, 0)
    arrivals = rep.truth.arrivals
    sig = grid.signal(T)
    x_pt, _ = rep.obs.point_queue(grid.elapsed_green_array(T))
    obs = rep.obs.a_tilde
    init = stationary_cycle_start(Uniform(mu), grid).mass
    rates = np.full(T, mu)
    fwd_args = (rates, sig, obs, x_pt, init, args.phi, kernel.weights,
                kernel.half_width)

    print(f"T = {T} steps, {init.size} queue states, numba available: {_accel.HAVE_NUMBA}")
    rows = []
    for name, fn in [("forward (loglik only)", lambda f: f(*fwd_args, False, False)),
                     ("forward (store posteriors)", lambda f: f(*fwd_args, True, False))]:
        res = {}
        for backend, f in [("numpy", _kernels.forward_numpy), ("numba", _kernels.forward_numba)]:
            if backend == "numba" and not _accel.HAVE_NUMBA:
                continue
            fn(f)  # compile / warm caches
            res[backend] = best_of(lambda: fn(f), args.repeat)
        rows.append((name, res))
        if len(res) == 2:
            assert np.isfinite(res["numba"][1][0])
            assert abs(res["numpy"][1][0] - res["numba"][1][0]) < 1e-8
    sim = {}
    for backend, f in [("numpy", _kernels.simulate_queue_numpy),
                       ("numba", _kernels.simulate_queue_numba)]:
        if backend == "numba" and not _accel.HAVE_NUMBA:
            continue
        f(arrivals, sig, 0)
        sim[backend] = best_of(lambda: f(arrivals, sig, 0), args.repeat)
    rows.append(("simulate_queue", sim))

    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, res in rows:
        npy = res["numpy"][0] * 1e3
        nb = res["numba"][0] * 1e3 if "numba" in res else float("nan")
        print(f"{name:28s} {npy:10.2f} {nb:10.2f} {npy / nb:8.1f}")


if __name__ == "__main__":
    main()
