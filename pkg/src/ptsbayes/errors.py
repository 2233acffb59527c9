"""Exception and warning types shared across the package."""


class PTSError(Exception):
    """Base class for all package errors."""


class ConfigError(PTSError, ValueError):
    """Invalid configuration or input file."""

    def __init__(self, message, source=None, line=None):
        self.source = source
        self.line = line
        if source is not None and line is not None:
            message = f"{source}:{line}: {message}"
        elif source is not None:
            message = f"{source}: {message}"
        super().__init__(message)


class TruncationOverflow(PTSError, ArithmeticError):
    """Queue pmf mass reached the truncation cap ``k_max``."""


class EncodeCollisionError(PTSError, ValueError):
    """Two observed trajectories map to the same arrival step."""

    def __init__(self, step, vehicle_ids):
        self.step = step
        self.vehicle_ids = tuple(vehicle_ids)
        super().__init__(
            f"observed arrivals collide at step {step}: vehicles {', '.join(map(str, vehicle_ids))}"
        )


class HorizonTooLarge(PTSError, ValueError):
    """Brute-force enumeration refused because the horizon is too long."""


class DegeneratePosteriorError(PTSError):
    """Every parameter point has zero likelihood."""


class SaturationWarning(UserWarning):
    """Warm-up iteration did not reach a stationary cycle-start pmf."""


class ProposalMismatchWarning(UserWarning):
    """Importance weights collapsed onto a few draws."""


class ConvergenceWarning(UserWarning):
    """Optimizer or sampler diagnostics indicate non-convergence."""


class LinkOverflow(PTSError):
    """Simulated queue exceeded what the link can store."""
