"""Hot loops: the forward queue-pmf recursion and the hidden queue simulator.

Each kernel exists twice: a scalar-loop version compiled with numba and a
numpy version that vectorizes over the queue axis. ``forward`` and
``simulate_queue`` dispatch according to ``_accel.USE_NUMBA``.

Arrays are 0-based: element ``i`` holds model step ``t = i + 1``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

# Mass allowed at the truncation cap before the recursion reports overflow.
TAIL_TOL = 1e-6

FAIL_NONE = 0
FAIL_ZERO_LIKELIHOOD = 1
FAIL_OVERFLOW = 2


@njit
def _obs_weight(j, m, kw, h):
    # P(observed vehicles-ahead = j | true vehicles-ahead = m), with the
    # kernel censored at zero: the observation is max(0, m + c).
    if j >= 1:
        c = j - m
        if c < -h or c > h:
            return 0.0
        return kw[c + h]
    if m > h:
        return 0.0
    s = 0.0
    for c in range(-h, -m + 1):
        s += kw[c + h]
    return s


@njit
def forward_numba(a, green, obs_flag, obs_pt, init, phi, kw, h, store_post, store_interim):
    T = a.shape[0]
    n = init.shape[0]
    kmax = n - 1
    x = init.copy()
    xp = np.empty(n)
    post = np.full((T if store_post else 0, n), np.nan)
    interim = np.full((T if store_interim else 0, n), np.nan)
    ahat = np.full(T, np.nan)
    lcum = np.full(T, -np.inf)
    L = 0.0
    for i in range(T):
        ai = a[i]
        if obs_flag[i]:
            p = ai * phi
            if p <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(p)
            ah = 1.0
        else:
            q = 1.0 - ai * phi
            if q <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(q)
            ah = ai * (1.0 - phi) / q
        ahat[i] = ah

        xp[0] = x[0] * (1.0 - ah)
        for k in range(1, n):
            xp[k] = x[k - 1] * ah + x[k] * (1.0 - ah)
        if xp[kmax] >= TAIL_TOL:
            return -np.inf, i, FAIL_OVERFLOW, x, post, interim, ahat, lcum

        if obs_flag[i]:
            j = obs_pt[i]
            K = 0.0
            xp[0] = 0.0
            for k in range(1, n):
                xp[k] *= _obs_weight(j, k - 1, kw, h)
                K += xp[k]
            if K <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(K)
            for k in range(n):
                xp[k] /= K
        if store_interim:
            s = 0.0
            for k in range(n):
                s += xp[k]
            for k in range(n):
                interim[i, k] = xp[k] / s

        if green[i]:
            x[0] = xp[0] + xp[1]
            for k in range(1, kmax):
                x[k] = xp[k + 1]
            x[kmax] = 0.0
        else:
            for k in range(n):
                x[k] = xp[k]
        s = 0.0
        for k in range(n):
            s += x[k]
        for k in range(n):
            x[k] /= s
        if store_post:
            for k in range(n):
                post[i, k] = x[k]
        lcum[i] = L
    return L, -1, FAIL_NONE, x, post, interim, ahat, lcum


def _obs_weight_vector(j, n, kw, h):
    """Censored observation weights for true vehicles-ahead m = 0..n-1."""
    m = np.arange(n)
    w = np.zeros(n)
    if j >= 1:
        c = j - m
        inside = np.abs(c) <= h
        w[inside] = kw[c[inside] + h]
    else:
        cum = np.cumsum(kw)
        inside = m <= h
        w[inside] = cum[h - m[inside]]
    return w


def forward_numpy(a, green, obs_flag, obs_pt, init, phi, kw, h, store_post, store_interim):
    T = a.shape[0]
    n = init.shape[0]
    kmax = n - 1
    x = np.array(init, dtype=float)
    post = np.full((T if store_post else 0, n), np.nan)
    interim = np.full((T if store_interim else 0, n), np.nan)
    ahat = np.full(T, np.nan)
    lcum = np.full(T, -np.inf)
    kw = np.asarray(kw, dtype=float)
    L = 0.0
    xp = np.empty(n)
    for i in range(T):
        ai = a[i]
        if obs_flag[i]:
            p = ai * phi
            if p <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(p)
            ah = 1.0
        else:
            q = 1.0 - ai * phi
            if q <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(q)
            ah = ai * (1.0 - phi) / q
        ahat[i] = ah

        xp[0] = x[0] * (1.0 - ah)
        xp[1:] = x[:-1] * ah + x[1:] * (1.0 - ah)
        if xp[kmax] >= TAIL_TOL:
            return -np.inf, i, FAIL_OVERFLOW, x, post, interim, ahat, lcum

        if obs_flag[i]:
            xp[0] = 0.0
            xp[1:] *= _obs_weight_vector(int(obs_pt[i]), n - 1, kw, h)
            K = xp.sum()
            if K <= 0.0:
                return -np.inf, i, FAIL_ZERO_LIKELIHOOD, x, post, interim, ahat, lcum
            L += math.log(K)
            xp /= K
        if store_interim:
            interim[i] = xp / xp.sum()

        if green[i]:
            x[0] = xp[0] + xp[1]
            x[1:kmax] = xp[2:]
            x[kmax] = 0.0
        else:
            x[:] = xp
        x /= x.sum()
        if store_post:
            post[i] = x
        lcum[i] = L
    return L, -1, FAIL_NONE, x, post, interim, ahat, lcum


@njit
def simulate_queue_numba(arrivals, green, x0):
    T = arrivals.shape[0]
    X = np.empty(T, dtype=np.int64)
    B = np.zeros(T, dtype=np.uint8)
    q = x0
    for i in range(T):
        q += arrivals[i]
        if green[i] and q >= 1:
            q -= 1
            B[i] = 1
        X[i] = q
    return X, B


def simulate_queue_numpy(arrivals, green, x0):
    T = arrivals.shape[0]
    X = np.empty(T, dtype=np.int64)
    B = np.zeros(T, dtype=np.uint8)
    q = int(x0)
    for i in range(T):
        q += int(arrivals[i])
        if green[i] and q >= 1:
            q -= 1
            B[i] = 1
        X[i] = q
    return X, B


if USE_NUMBA:
    forward = forward_numba
    simulate_queue = simulate_queue_numba
else:
    forward = forward_numpy
    simulate_queue = simulate_queue_numpy
