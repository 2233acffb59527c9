import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from ptsbayes.errors import ConvergenceWarning, DegeneratePosteriorError, ProposalMismatchWarning
from ptsbayes.filtering import forward
from ptsbayes.inference import (Identity, LikelihoodModel, Log, Logit, ParamSpace,
                                WeightedPosterior, fit_map, green_onset_estimates, grid_posterior,
                                hdi, importance_sampling, laplace, max_queue_eval, metrics,
                                mh_accept_prob, observed_fisher, pmf_mean, pmf_var, rw_metropolis,
                                split_rhat, state_mixture)
from ptsbayes.observation import GeometryParams, kernel_build, read_observations_csv
from ptsbayes.pts_core import DiscreteGrid, Uniform, propagate, stationary_cycle_start, vph_to_rate
from ptsbayes.simulator import SimConfig, simulate_replication

FIXTURES = Path(__file__).parent / "fixtures"
GRID_1H = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=40)
K2 = kernel_build(1.0, 2)
MU = float(vph_to_rate(720, 1.0))


@pytest.fixture(scope="module")
def fixture_model():
    return LikelihoodModel([read_observations_csv(FIXTURES / "obs_1h.csv")], GRID_1H, K2)


# -- transforms ---------------------------------------------------------------

@pytest.mark.parametrize("tr", [Identity(), Log(), Logit(), Logit(0.005, 1.0), Logit(-2, 3)])
@given(z=st.floats(-8, 8))
def test_transform_roundtrip_and_jacobian(tr, z):
    x = tr.to_natural(z)
    assert tr.to_unconstrained(x) == pytest.approx(z, abs=1e-6)
    h = 1e-6
    deriv = (tr.to_natural(z + h) - tr.to_natural(z - h)) / (2 * h)
    if deriv > 1e-8:
        assert float(tr.log_jac(z)) == pytest.approx(np.log(deriv), abs=1e-4)


# -- grid posterior -------------------------------------------------------------

def test_grid_single_cell():
    gp = grid_posterior(lambda th: -3.0, [[0.2], [0.1]])
    assert gp.posterior.item() == 1.0


def test_grid_two_equal_cells():
    gp = grid_posterior(lambda th: 5.0, [[0.1, 0.2]])
    np.testing.assert_allclose(gp.posterior, [0.5, 0.5])


def test_grid_degenerate():
    with pytest.raises(DegeneratePosteriorError):
        grid_posterior(lambda th: -np.inf, [[0.1, 0.2], [0.3]])


def test_grid_hdi_accumulates_cells():
    ax = np.arange(5.0)
    gp = grid_posterior(lambda th: np.log([0.05, 0.2, 0.5, 0.2, 0.05][int(th[0])]), [ax])
    assert gp.hdi(0, 0.5) == (2.0, 2.0)
    assert gp.hdi(0, 0.85) == (1.0, 3.0)
    assert gp.hdi(0, 1.0) == (0.0, 4.0)


# -- MAP, Fisher, Laplace -------------------------------------------------------

def test_map_of_quadratic():
    res = fit_map(lambda z: -(z[0] - 2.0) ** 2 / 0.5, init=[0.3])
    assert abs(res.theta[0] - 2.0) < 1e-6


def test_fisher_of_quadratic():
    F = observed_fisher(lambda z: -(z[0] - 2.0) ** 2 / (2 * 0.25), [2.0])
    assert F[0, 0] == pytest.approx(4.0, rel=1e-6)
    la = laplace([2.0], F)
    assert la.covariance[0, 0] == pytest.approx(0.25, rel=1e-6)


def test_fisher_matches_analytic_gaussian_hessian():
    cov = np.array([[2.0, -0.6], [-0.6, 0.5]])
    prec = np.linalg.inv(cov)
    mean = np.array([1.5, -0.7])
    logp = lambda z: stats.multivariate_normal(mean, cov).logpdf(z)
    F = observed_fisher(logp, mean)
    np.testing.assert_allclose(F, prec, rtol=1e-4)
    np.testing.assert_array_equal(F, F.T)


def test_laplace_identity_fisher():
    la = laplace([0.0], [[1.0]])
    assert la.positive_definite and la.covariance[0, 0] == 1.0


def test_laplace_flags_non_pd():
    with pytest.warns(ConvergenceWarning):
        la = laplace([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    assert not la.positive_definite
    with pytest.raises(np.linalg.LinAlgError):
        la.sample(10, np.random.default_rng(0))


# -- importance sampling ---------------------------------------------------------

def test_is_with_exact_proposal_has_equal_weights():
    la = laplace([0.4, -1.0], np.linalg.inv([[0.3, 0.1], [0.1, 0.2]]))
    post = importance_sampling(lambda z: la.logpdf(z)[0], la, 500, np.random.default_rng(1))
    w = post.normalized_weights
    assert np.abs(w * 500 - 1).max() < 1e-9
    assert post.ess == pytest.approx(500, abs=1e-6)


def test_is_warns_on_mismatched_proposal():
    target = lambda z: stats.norm(0, 0.1).logpdf(z[0])
    off = laplace([2.0], [[1.0]])
    with pytest.warns(ProposalMismatchWarning):
        post = importance_sampling(target, off, 200, np.random.default_rng(0))
    assert post.ess < 10


def test_is_needs_enough_draws():
    with pytest.raises(ValueError):
        importance_sampling(lambda z: 0.0, laplace([0.0], [[1.0]]), 50)


# -- random-walk Metropolis -------------------------------------------------------

def test_mh_accepts_equal_density_moves():
    assert mh_accept_prob(0.0) == 1.0
    assert mh_accept_prob(np.log(0.25)) == pytest.approx(0.25)


def test_rw_metropolis_standard_gaussian():
    post = rw_metropolis(lambda z: -0.5 * z[0] ** 2, [0.0], n_chains=4, n_samples=10_000,
                         n_warmup=1000, rng=np.random.default_rng(2024))
    x = post.theta[:, 0]
    assert x.size == 40_000
    assert abs(x.mean()) < 0.05
    assert x.var() == pytest.approx(1.0, rel=0.10)
    assert np.all(post.diagnostics["rhat"] < 1.05)
    assert np.all((post.diagnostics["accept"] > 0.15) & (post.diagnostics["accept"] < 0.6))


def test_split_rhat_detects_disagreeing_chains():
    rng = np.random.default_rng(0)
    same = rng.standard_normal((4, 1000, 1))
    assert split_rhat(same)[0] < 1.01
    shifted = same + np.arange(4)[:, None, None]
    assert split_rhat(shifted)[0] > 1.05


def test_rw_metropolis_warns_without_mixing():
    bimodal = lambda z: np.logaddexp(-0.5 * ((z[0] - 30) / 0.3) ** 2, -0.5 * ((z[0] + 30) / 0.3) ** 2)
    starts = np.array([[30.0], [-30.0], [30.0], [-30.0]])
    with pytest.warns(ConvergenceWarning):
        rw_metropolis(bimodal, starts, n_samples=300, n_warmup=300, rng=np.random.default_rng(0))


# -- HDI and metrics ------------------------------------------------------------

def test_hdi_hand_example():
    v = np.repeat([1.0, 2.0, 3.0], 20)
    w = np.repeat([0.5, 0.3, 0.2], 20) / 20
    assert hdi(v, w, 0.5) == (1.0, 1.0)
    assert hdi(v, w, 1.0) == (1.0, 3.0)


def test_hdi_gaussian():
    x = np.random.default_rng(3).normal(0, 2.0, 200_000)
    lo, hi = hdi(x, mass=0.95)
    assert lo == pytest.approx(-1.96 * 2, rel=0.05) and hi == pytest.approx(1.96 * 2, rel=0.05)


def test_hdi_refuses_few_effective_samples():
    with pytest.raises(ValueError):
        hdi([1.0, 2.0, 3.0], [1.0, 1e-9, 1e-9], 0.5)


def test_metrics_examples():
    assert metrics([110.0], [100.0]).mape == pytest.approx(10.0)
    iv = [(0, 2)] * 9 + [(5, 6)]
    m = metrics(np.ones(10), np.ones(10), iv)
    assert m.cr == pytest.approx(90.0) and m.awci == pytest.approx((9 * 2 + 1) / 10)
    z = metrics([1.0, 2.0], [0.0, 1.0])
    assert z.n_excluded == 1 and z.mape == pytest.approx(100.0)


# -- likelihood model -------------------------------------------------------------

def test_model_bounds_and_days(fixture_model):
    m = fixture_model
    assert m.loglik([MU, 0.1]) > -np.inf
    assert m.loglik([0.97, 0.1]) == -np.inf
    assert m.loglik([MU, 0.001]) == -np.inf
    two = LikelihoodModel(m.datasets * 2, GRID_1H, K2)
    assert two.loglik([MU, 0.1]) == pytest.approx(2 * m.loglik([MU, 0.1]))


def test_map_invariant_to_rate_transform(fixture_model):
    ident = LikelihoodModel(fixture_model.datasets, GRID_1H, K2, rate_transform="identity")
    a = fit_map(fixture_model, init=[0.2, 0.12], n_starts=2)
    b = fit_map(ident, init=[0.2, 0.12], n_starts=2)
    np.testing.assert_allclose(a.theta, b.theta, rtol=2e-3)


def test_map_within_one_grid_cell(fixture_model):
    mu_ax = np.linspace(0.15, 0.27, 49)
    phi_ax = np.linspace(0.05, 0.2, 61)
    gp = grid_posterior(fixture_model, [mu_ax, phi_ax])
    mp = fit_map(fixture_model, n_starts=3)
    cell = np.array([mu_ax[1] - mu_ax[0], phi_ax[1] - phi_ax[0]])
    assert np.all(np.abs(mp.theta - gp.argmax()) <= cell)


def test_mu_phi_negatively_correlated():
    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=320)
    cfg = SimConfig(grid, Uniform(MU), 0.1, GeometryParams(), K2, seed=21)
    model = LikelihoodModel([simulate_replication(cfg, 0).obs], grid, K2)
    mp = fit_map(model, n_starts=1)
    la = laplace(mp.z, observed_fisher(model, mp.z), model.space)
    assert la.covariance[0, 1] < 0
    assert la.fisher[0, 1] > 0


# -- real-time estimates -----------------------------------------------------------

def test_state_mixture_single_and_duplicate(fixture_model):
    th = np.array([MU, 0.1])
    ref = fixture_model.filter(th).posteriors
    one = WeightedPosterior(th[None], np.ones(1), np.zeros(1), "mcmc", fixture_model.names)
    np.testing.assert_allclose(state_mixture(one, fixture_model), ref, atol=1e-14)
    two = WeightedPosterior(np.vstack([th, th]), np.ones(2), np.zeros(2), "mcmc",
                            fixture_model.names)
    np.testing.assert_allclose(state_mixture(two, fixture_model), ref, atol=1e-14)


def test_state_mixture_wider_than_point_estimate(fixture_model):
    mp = fit_map(fixture_model, n_starts=2)
    la = laplace(mp.z, observed_fisher(fixture_model, mp.z), fixture_model.space)
    post = importance_sampling(fixture_model, la, 300, np.random.default_rng(5))
    mix = state_mixture(post, fixture_model)
    assert np.abs(mix.sum(axis=1) - 1).max() < 1e-9
    point = fixture_model.filter(post.mean()).posteriors
    assert pmf_var(mix).mean() >= pmf_var(point).mean()


def test_max_queue_eval_perfect_information():
    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=40)
    k0 = kernel_build(0.0, 0)
    rep = simulate_replication(SimConfig(grid, Uniform(0.15), 1.0, GeometryParams(), k0, 4), 0)
    init = stationary_cycle_start(Uniform(0.15), grid)
    xp, _ = rep.obs.point_queue(grid.elapsed_green_array(grid.horizon))
    res = forward(np.full(grid.horizon, 0.15), grid.signal(), rep.obs.a_tilde, xp, init.mass,
                  1.0, k0)
    assert max_queue_eval(res.posteriors, rep.truth.max_queue_per_cycle, grid, init.mass).mape < 1e-9


def test_max_queue_without_observations_is_prior_mean():
    grid = DiscreteGrid.from_seconds(1.0, 90, 35, n_cycles=10)
    init = stationary_cycle_start(Uniform(0.15), grid)
    T = grid.horizon
    rates = np.full(T, 0.15)
    res = forward(rates, grid.signal(), np.zeros(T, np.uint8), np.zeros(T, np.int64),
                  init.mass, 0.0, K2)
    est = green_onset_estimates(res.posteriors, grid, init.mass)
    prior = pmf_mean(propagate(init.mass, rates, grid.signal()))[grid.green_onset_steps() - 1]
    np.testing.assert_allclose(est, prior, atol=1e-12)
    assert np.ptp(est) < 1e-9  # stationary: identical every cycle
