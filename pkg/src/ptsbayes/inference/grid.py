"""Posterior mass on a rectangular mesh of natural-scale parameter values."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..errors import DegeneratePosteriorError


@dataclass
class GridPosterior:
    axes: list
    log_liks: np.ndarray
    posterior: np.ndarray
    names: list

    @property
    def shape(self):
        return self.posterior.shape

    def marginal(self, i: int) -> np.ndarray:
        other = tuple(j for j in range(self.posterior.ndim) if j != i)
        return self.posterior.sum(axis=other)

    def mean(self) -> np.ndarray:
        return np.array([np.dot(self.marginal(i), ax) for i, ax in enumerate(self.axes)])

    def sd(self) -> np.ndarray:
        m = self.mean()
        return np.array([np.sqrt(np.dot(self.marginal(i), (ax - m[i]) ** 2))
                         for i, ax in enumerate(self.axes)])

    def argmax(self) -> np.ndarray:
        idx = np.unravel_index(np.argmax(self.log_liks), self.log_liks.shape)
        return np.array([ax[j] for ax, j in zip(self.axes, idx)])

    def argmax_index(self) -> tuple:
        return tuple(int(j) for j in np.unravel_index(np.argmax(self.log_liks), self.log_liks.shape))

    def cell_width(self, i: int) -> float:
        ax = self.axes[i]
        return float(np.max(np.diff(ax))) if ax.size > 1 else 0.0

    def hdi(self, i: int, mass: float = 0.95):
        """Highest-mass cells of marginal ``i`` accumulated until ``mass`` is covered."""
        if not 0.0 < mass <= 1.0:
            raise ValueError("mass must lie in (0, 1]")
        m = self.marginal(i)
        order = np.argsort(-m, kind="stable")
        k = int(np.searchsorted(np.cumsum(m[order]), mass - 1e-12)) + 1
        chosen = self.axes[i][order[:k]]
        return float(chosen.min()), float(chosen.max())

    def cells(self):
        """Rows of (θ..., log_lik, posterior) in C order."""
        mesh = np.stack(np.meshgrid(*self.axes, indexing="ij"), axis=-1).reshape(-1, len(self.axes))
        return np.column_stack([mesh, self.log_liks.ravel(), self.posterior.ravel()])


def grid_posterior(target, axes, names=None) -> GridPosterior:
    """Evaluate the log-likelihood on every mesh cell and normalize under a flat prior.

    ``target`` is a :class:`LikelihoodModel` (summing over its days) or a
    callable taking the natural parameter vector.
    """
    axes = [np.atleast_1d(np.asarray(ax, dtype=float)) for ax in axes]
    fn = target.loglik if hasattr(target, "loglik") else target
    if names is None:
        names = list(getattr(target, "names", [f"x{i}" for i in range(len(axes))]))
    ll = np.empty([ax.size for ax in axes])
    for idx in itertools.product(*(range(ax.size) for ax in axes)):
        ll[idx] = fn(np.array([ax[j] for ax, j in zip(axes, idx)]))
    top = np.max(ll)
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every grid cell has zero likelihood")
    w = np.exp(ll - top)
    return GridPosterior(axes, ll, w / w.sum(), names)
