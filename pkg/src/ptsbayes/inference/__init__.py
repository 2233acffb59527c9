"""Parameter estimation for the queue model and posterior summaries."""
from .evaluation import (Metrics, green_onset_estimates, hdi, max_queue_eval, metrics,
                         mixture_pmfs, pmf_mean, pmf_var, state_mixture)
from .grid import GridPosterior, grid_posterior
from .model import LikelihoodModel
from .optimize import LaplaceApprox, MapResult, fit_map, laplace, observed_fisher
from .sampling import (WeightedPosterior, importance_sampling, mh_accept_prob, rw_metropolis,
                       split_rhat)
from .transforms import Identity, Log, Logit, ParamSpace

__all__ = [
    "GridPosterior", "LaplaceApprox", "LikelihoodModel", "MapResult", "Metrics",
    "WeightedPosterior", "ParamSpace", "Identity", "Log", "Logit", "fit_map",
    "green_onset_estimates", "grid_posterior", "hdi", "importance_sampling", "laplace",
    "max_queue_eval", "metrics", "mh_accept_prob", "mixture_pmfs", "observed_fisher",
    "pmf_mean", "pmf_var", "rw_metropolis", "split_rhat", "state_mixture",
]
