"""Bijections between bounded natural parameters and the real line."""
from __future__ import annotations

import numpy as np
from scipy.special import expit, logit


class Transform:
    """``to_natural(z)`` maps R to the support; ``log_jac(z)`` is log |dx/dz|."""

    def to_natural(self, z):
        raise NotImplementedError

    def to_unconstrained(self, x):
        raise NotImplementedError

    def log_jac(self, z):
        raise NotImplementedError


class Identity(Transform):
    def to_natural(self, z):
        return z

    def to_unconstrained(self, x):
        return x

    def log_jac(self, z):
        return 0.0 * z

    def __repr__(self):
        return "Identity()"


class Log(Transform):
    def to_natural(self, z):
        return np.exp(z)

    def to_unconstrained(self, x):
        with np.errstate(divide="ignore"):
            return np.log(x)

    def log_jac(self, z):
        return z

    def __repr__(self):
        return "Log()"


class Logit(Transform):
    """Logistic map onto ``(lo, hi)``."""

    def __init__(self, lo=0.0, hi=1.0):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)

    def to_natural(self, z):
        return self.lo + (self.hi - self.lo) * expit(z)

    def to_unconstrained(self, x):
        with np.errstate(divide="ignore"):
            return logit((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo))

    def log_jac(self, z):
        # log s + log(1 - s), written to stay finite for large |z|
        z = np.asarray(z, dtype=float)
        return np.log(self.hi - self.lo) - np.abs(z) - 2.0 * np.log1p(np.exp(-np.abs(z)))

    def __repr__(self):
        return f"Logit({self.lo}, {self.hi})"


TRANSFORMS = {"identity": Identity, "log": Log, "logit": Logit}


class ParamSpace:
    """Per-coordinate transforms plus box bounds on the natural scale."""

    def __init__(self, names, transforms, lower, upper):
        self.names = list(names)
        self.transforms = list(transforms)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if not (len(self.names) == len(self.transforms) == self.lower.size == self.upper.size):
            raise ValueError("names, transforms and bounds must have equal length")

    @property
    def dim(self) -> int:
        return len(self.names)

    def to_natural(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([tr.to_natural(z[..., i]) for i, tr in enumerate(self.transforms)], axis=-1)

    def to_unconstrained(self, x):
        x = np.asarray(x, dtype=float)
        return np.stack([tr.to_unconstrained(x[..., i]) for i, tr in enumerate(self.transforms)],
                        axis=-1)

    def log_jac(self, z):
        z = np.asarray(z, dtype=float)
        return sum(tr.log_jac(z[..., i]) for i, tr in enumerate(self.transforms))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x)) and np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x):
        return np.clip(x, self.lower, self.upper)

    @classmethod
    def identity(cls, dim, names=None):
        names = names or [f"x{i}" for i in range(dim)]
        return cls(names, [Identity() for _ in range(dim)], [-np.inf] * dim, [np.inf] * dim)
