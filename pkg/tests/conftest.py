import numpy as np
import pytest

from ptsbayes import _accel, _kernels
from ptsbayes.observation import GeometryParams, kernel_build
from ptsbayes.pts_core import DiscreteGrid, Uniform, vph_to_rate

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run the test once per kernel implementation."""
    suffix = request.param
    monkeypatch.setattr(_kernels, "forward", getattr(_kernels, f"forward_{suffix}"))
    monkeypatch.setattr(_kernels, "simulate_queue", getattr(_kernels, f"simulate_queue_{suffix}"))
    return suffix


@pytest.fixture
def table1_grid():
    return DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=40)


@pytest.fixture
def kernel():
    return kernel_build(1.0, 2)


@pytest.fixture
def geom():
    return GeometryParams()


@pytest.fixture
def mu720():
    return Uniform(float(vph_to_rate(720, 1.0)))


def random_instance(rng, T_max=10, n=7, init_support=3):
    """Random tiny filter instance: (rates, signal, a_tilde, x_point, init, phi, kernel)."""
    T = int(rng.integers(1, T_max + 1))
    a = rng.random(T)
    a[rng.random(T) < 0.15] = rng.choice([0.0, 1.0])
    sig = rng.integers(0, 2, T).astype(np.uint8)
    phi = float(rng.uniform(0.02, 1.0))
    init = np.zeros(n)
    init[:init_support] = rng.dirichlet(np.ones(init_support))
    kern = kernel_build(float(rng.uniform(0.5, 2.0)), int(rng.integers(0, 3)))
    return a, sig, phi, init, kern


def consistent_observations(rng, a, sig, phi, init, kern):
    """Sample hidden arrivals and observations that the model can produce."""
    T = a.size
    x = int(rng.choice(init.size, p=init))
    at = np.zeros(T, dtype=np.uint8)
    xp = np.zeros(T, dtype=np.int64)
    h = kern.half_width
    for i in range(T):
        A = rng.random() < a[i]
        if A and rng.random() < phi:
            at[i] = 1
            c = rng.choice(np.arange(-h, h + 1), p=kern.weights)
            xp[i] = max(0, x + c)
        x += int(A)
        if sig[i] and x >= 1:
            x -= 1
    return at, xp


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance_report(request):
    """Record one PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def report(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
