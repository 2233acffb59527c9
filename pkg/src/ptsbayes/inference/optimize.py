"""Posterior mode, observed information, and the Gaussian approximation around the mode."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from ..errors import ConvergenceWarning
from ._target import as_target
from .transforms import ParamSpace


@dataclass
class MapResult:
    theta: np.ndarray
    z: np.ndarray
    log_lik: float
    converged: bool
    n_evals: int
    starts: list = field(default_factory=list)


_INFEASIBLE = 1e300


def fit_map(target, init=None, n_starts=5, rng=None, maxiter=2000, xatol=1e-7, fatol=1e-9,
            start_scale=0.5, simplex_size=0.2) -> MapResult:
    """Maximize the log-likelihood with multi-start Nelder-Mead in unconstrained space.

    The prior is flat on the natural scale, so the mode is the likelihood
    maximizer and does not depend on the chosen transforms. The first start
    is ``init``; the others jitter it by ``N(0, start_scale^2)`` per
    unconstrained coordinate.
    """
    if init is None:
        init = target.default_init()
    init = np.atleast_1d(np.asarray(init, dtype=float))
    tgt = as_target(target, init.size)
    space: ParamSpace = tgt.space
    rng = np.random.default_rng(0) if rng is None else rng
    z0 = np.atleast_1d(space.to_unconstrained(init))
    if not np.all(np.isfinite(z0)):
        raise ValueError(f"initial point {init} lies on the boundary of the parameter space")

    def objective(z):
        v = tgt.loglik_z(z)
        # finite stand-in for -inf so the simplex spread test never sees inf - inf
        return -v if np.isfinite(v) else _INFEASIBLE

    best = None
    results = []
    total = 0
    d = z0.size
    for s in range(max(1, n_starts)):
        start = z0 if s == 0 else z0 + rng.normal(0.0, start_scale, size=d)
        simplex = np.vstack([start, start + simplex_size * np.eye(d)])
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxiter": maxiter, "maxfev": 4 * maxiter, "xatol": xatol,
                                "fatol": fatol, "initial_simplex": simplex})
        total += res.nfev
        results.append((np.asarray(res.x), -float(res.fun) if res.fun < _INFEASIBLE else -np.inf,
                        bool(res.success)))
        if best is None or res.fun < best.fun:
            best = res
    z = np.atleast_1d(np.asarray(best.x, dtype=float))
    ll = -float(best.fun) if best.fun < _INFEASIBLE else -np.inf
    out = MapResult(np.atleast_1d(space.to_natural(z)), z, ll, bool(best.success),
                    total, results)
    if not out.converged:
        warnings.warn("Nelder-Mead hit its iteration cap; returning the best point found",
                      ConvergenceWarning, stacklevel=2)
    return out


def observed_fisher(target, z_map, rel_step=1e-3) -> np.ndarray:
    """Central finite-difference Hessian of ``-log L`` at ``z_map`` (unconstrained scale).

    Step per coordinate is ``rel_step * max(1, |z_i|)``; the result is symmetrized.
    """
    z_map = np.atleast_1d(np.asarray(z_map, dtype=float))
    d = z_map.size
    tgt = as_target(target, d)
    f = lambda z: -tgt.loglik_z(z)
    h = rel_step * np.maximum(1.0, np.abs(z_map))
    f0 = f(z_map)
    H = np.empty((d, d))
    E = np.diag(h)
    for i in range(d):
        H[i, i] = (f(z_map + E[i]) - 2.0 * f0 + f(z_map - E[i])) / h[i] ** 2
        for j in range(i + 1, d):
            H[i, j] = (f(z_map + E[i] + E[j]) - f(z_map + E[i] - E[j])
                       - f(z_map - E[i] + E[j]) + f(z_map - E[i] - E[j])) / (4.0 * h[i] * h[j])
            H[j, i] = H[i, j]
    return 0.5 * (H + H.T)


@dataclass
class LaplaceApprox:
    """Gaussian ``N(map_z, fisher^-1)`` on the unconstrained scale."""

    map_z: np.ndarray
    fisher: np.ndarray
    covariance: np.ndarray | None
    space: ParamSpace
    positive_definite: bool

    @property
    def map(self) -> np.ndarray:
        return np.atleast_1d(self.space.to_natural(self.map_z))

    def _chol(self):
        if not self.positive_definite:
            raise np.linalg.LinAlgError("observed information is not positive definite")
        return np.linalg.cholesky(self.covariance)

    def sample(self, n, rng) -> np.ndarray:
        L = self._chol()
        return self.map_z + rng.standard_normal((n, self.map_z.size)) @ L.T

    def sample_natural(self, n, rng) -> np.ndarray:
        return self.space.to_natural(self.sample(n, rng))

    def logpdf(self, z) -> np.ndarray:
        L = self._chol()
        d = self.map_z.size
        r = np.atleast_2d(z) - self.map_z
        u = np.linalg.solve(L, r.T)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        return -0.5 * (np.sum(u * u, axis=0) + d * np.log(2 * np.pi) + logdet)

    def sd(self) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance))

    def correlation(self) -> np.ndarray:
        s = self.sd()
        return self.covariance / np.outer(s, s)


def laplace(map_z, fisher, space=None) -> LaplaceApprox:
    """Gaussian approximation at the mode; non-PD information is flagged, not inverted."""
    map_z = np.atleast_1d(np.asarray(map_z, dtype=float))
    fisher = np.atleast_2d(np.asarray(fisher, dtype=float))
    space = ParamSpace.identity(map_z.size) if space is None else space
    pd = bool(np.all(np.isfinite(fisher)))
    if pd:
        try:
            np.linalg.cholesky(fisher)
        except np.linalg.LinAlgError:
            pd = False
    if not pd:
        warnings.warn("observed information is not positive definite; the posterior is not "
                      "well approximated by a Gaussian", ConvergenceWarning, stacklevel=2)
        return LaplaceApprox(map_z, fisher, None, space, False)
    cov = np.linalg.inv(fisher)
    return LaplaceApprox(map_z, fisher, 0.5 * (cov + cov.T), space, True)
