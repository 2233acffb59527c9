"""Probabilistic time-space queue model with Bayesian estimation from sparse trajectories."""
from .errors import (ConfigError, ConvergenceWarning, DegeneratePosteriorError,
                     EncodeCollisionError, HorizonTooLarge, LinkOverflow, ProposalMismatchWarning,
                     PTSError, SaturationWarning, TruncationOverflow)
from .filtering import FilterResult, arrival_posterior, brute_force_loglik, brute_force_posterior, run_filter
from .observation import (GaussKernel, GeometryParams, ObservationSeq, RawTrajectory, encode,
                          kernel_build)
from .pts_core import (DiscreteGrid, PiecewiseConstant, QueuePmf, TrafficParams, Uniform,
                       arrival_prob, average_volume, stationary_cycle_start, step_pmf)

__version__ = "0.1.0"
