import numpy as np

from .transforms import ParamSpace


class CallableTarget:
    """Wrap a plain log-density ``f(z)`` on R^d as a target with identity transforms."""

    def __init__(self, fn, dim):
        self.fn = fn
        self.space = ParamSpace.identity(dim)

    def log_target(self, z):
        return float(self.fn(np.asarray(z, dtype=float)))

    loglik_z = log_target

    def loglik(self, theta):
        return self.log_target(theta)


def as_target(target, dim=None):
    if hasattr(target, "log_target") and hasattr(target, "space"):
        return target
    if not callable(target):
        raise TypeError("target must be a LikelihoodModel or a callable log-density")
    if dim is None:
        raise ValueError("dimension required for a callable target")
    return CallableTarget(target, dim)
