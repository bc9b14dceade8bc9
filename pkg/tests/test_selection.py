import itertools
import math

import numpy as np
import pytest
from scipy import integrate, optimize, stats
from scipy.special import gammaln, logsumexp

from bayescr.model import CauseSpec, ModelSpec
from bayescr.priors import CausePrior, GammaShapeRate, NormalPrecision, PriorSpec
from bayescr.sampler import SamplerConfig, mcse_mean, run_chains
from bayescr.selection import (
    SelectionError,
    SpikeSlabConfig,
    beta_binomial_log_prior,
    bf_gibbs_search,
    cause_view,
    enumerate_models,
    laplace_log_marginal,
    merged_inclusion_table,
    spike_slab_fit,
    trace_stability,
)

from conftest import make_dataset


def weibull_data(rng, n, beta, shape=1.3, scale=0.5, censor_max=3.0):
    p = len(beta)
    X = rng.standard_normal((n, p))
    rate = scale * np.exp(X @ np.asarray(beta, dtype=float))
    t = (rng.exponential(1.0, n) / rate) ** (1 / shape)
    cens = rng.uniform(0, censor_max, n)
    ev = (t <= cens).astype(int)
    return make_dataset(np.minimum(t, cens), ev, X, labels=["a"])


def test_laplace_matches_quadrature():
    rng = np.random.default_rng(3)
    n = 120
    d = weibull_data(rng, n, [0.6])
    v = cause_view(d, 1)
    t, e, x = v.time, v.event, v.X[:, 0]

    # null fit over both Weibull parameters, independent of the profiled search
    def nll(p):
        a, lam = np.exp(p)
        return -(e.sum() * (p[0] + p[1]) + (a - 1) * np.log(t[e]).sum() - lam * (t ** a).sum())

    a, lam = np.exp(optimize.minimize(nll, [0.0, 0.0], method="Nelder-Mead",
                                      options=dict(xatol=1e-12, fatol=1e-14, maxiter=5000)).x)
    H0 = lam * t ** a
    var = n / float((H0 * x * x).sum())
    const = e.sum() * (math.log(a) + math.log(lam)) + (a - 1) * np.log(t[e]).sum()
    ll = lambda b: const + b * x[e].sum() - (H0 * np.exp(b * x)).sum()
    mode = optimize.minimize_scalar(lambda b: -ll(b) + b * b / (2 * var)).x
    f = lambda b: math.exp(ll(b) - ll(mode) - b * b / (2 * var)) / math.sqrt(2 * math.pi * var)
    exact = ll(mode) + math.log(integrate.quad(f, mode - 3, mode + 3, points=[mode],
                                               epsabs=0, epsrel=1e-12, limit=200)[0])
    assert laplace_log_marginal(v, [1]) == pytest.approx(exact, rel=1e-4)


def test_null_model_is_maximized_loglik():
    rng = np.random.default_rng(4)
    v = cause_view(weibull_data(rng, 80, [0.5]), 1)
    t, e = v.time, v.event
    nll = lambda p: -(e.sum() * (p[0] + p[1]) + (math.exp(p[0]) - 1) * np.log(t[e]).sum()
                      - math.exp(p[1]) * (t ** math.exp(p[0])).sum())
    best = -optimize.minimize(nll, [0.0, 0.0], method="Nelder-Mead",
                              options=dict(xatol=1e-12, fatol=1e-14, maxiter=5000)).fun
    assert laplace_log_marginal(v, [0]) == pytest.approx(best, rel=1e-9)


def test_piecewise_null_model():
    d = make_dataset([0.5, 1.5, 2.0, 3.0], [1, 1, 0, 1], [[0.1], [0.4], [-0.3], [1.0]], labels=["a"])
    v = cause_view(d, 1, baseline="piecewise", knots=(0.0, 1.0))
    # occurrence/exposure: [0,1): 1 / 3.5; [1,inf): 2 / 3.5
    g1, g2 = 1 / 3.5, 2 / 3.5
    expected = math.log(g1) + 2 * math.log(g2) - g1 * 3.5 - g2 * 3.5
    assert laplace_log_marginal(v, [0]) == pytest.approx(expected, rel=1e-12)


def test_noise_column_bayes_factor_below_three():
    below = 0
    for rep in range(20):
        rng = np.random.default_rng(100 + rep)
        d = weibull_data(rng, 500, [0.8, 0.0])
        v = cause_view(d, 1)
        lbf = laplace_log_marginal(v, [1, 1]) - laplace_log_marginal(v, [1, 0])
        below += lbf < math.log(3)
    assert below >= 18


def test_invalid_gamma():
    rng = np.random.default_rng(5)
    v = cause_view(weibull_data(rng, 50, [0.5, 0.1]), 1)
    with pytest.raises(SelectionError):
        laplace_log_marginal(v, [1])
    with pytest.raises(SelectionError):
        laplace_log_marginal(v, [2, 0])


def test_collinear_columns_named():
    rng = np.random.default_rng(6)
    x = rng.standard_normal(100)
    X = np.column_stack([x, rng.standard_normal(100), 2 * x + 1e-6 * rng.standard_normal(100)])
    d = make_dataset(rng.exponential(1, 100), rng.integers(0, 2, 100), X, labels=["a"])
    with pytest.raises(SelectionError, match="x1/x3"):
        bf_gibbs_search(cause_view(d, 1), iterations=10, burn_in=2)


class TestEnumeration:
    def _view(self, seed=7):
        rng = np.random.default_rng(seed)
        return cause_view(weibull_data(rng, 300, [0.7, 0.15, 0.0]), 1)

    def test_inclusion_is_model_mass(self):
        mp = enumerate_models(self._view())
        assert mp.models["probability"].sum() == pytest.approx(1.0, abs=1e-12)
        for j in range(3):
            mass = sum(p for g, p in zip(mp.models["gamma"], mp.models["probability"]) if g[j])
            assert mp.inclusion[j] == pytest.approx(mass, abs=1e-10)

    def test_column_order_invariance(self):
        v = self._view()
        base = enumerate_models(v)
        perm = [2, 0, 1]
        pv = cause_view(make_dataset(v.time, v.event.astype(int), v.X[:, perm],
                                     [v.columns[j] for j in perm], ["a"]), 1)
        np.testing.assert_allclose(enumerate_models(pv).inclusion, base.inclusion[perm], atol=1e-10)

    def test_gibbs_matches_enumeration(self):
        v = self._view()
        exact = enumerate_models(v).inclusion
        mp = bf_gibbs_search(v, iterations=1000, burn_in=300, initial_dimension=5, seed=1)
        np.testing.assert_allclose(mp.inclusion, exact, atol=0.02)
        assert mp.trace.shape == (1000, 3)
        assert trace_stability(mp.trace) < 0.05
        assert mp.models["frequency"].sum() == pytest.approx(1.0)
        assert mp.top(3)["probability"].is_monotonic_decreasing

    def test_gibbs_is_seeded(self):
        v = self._view()
        a = bf_gibbs_search(v, iterations=200, burn_in=50, seed=4)
        b = bf_gibbs_search(v, iterations=200, burn_in=50, seed=4)
        np.testing.assert_array_equal(a.trace, b.trace)


def test_trace_stability_hand():
    trace = np.array([[0.0, 1.0], [0.5, 1.0], [0.6, 0.9], [0.62, 0.92]])
    assert trace_stability(trace, last=2) == pytest.approx(0.02)
    assert trace_stability(trace, last=4) == pytest.approx(0.62)


def test_beta_binomial_prior_normalized():
    for p in (1, 3, 6):
        lp = [beta_binomial_log_prior(g, 2.0, 3.0) for g in itertools.product((0, 1), repeat=p)]
        assert logsumexp(lp) == pytest.approx(0.0, abs=1e-12)
    # Beta(1,1): every model size is equally likely
    assert beta_binomial_log_prior([0, 0, 0]) == pytest.approx(-math.log(4))


def _ss_problem(seed, n, beta, p_extra=0):
    rng = np.random.default_rng(seed)
    p = len(beta) + p_extra
    X = rng.standard_normal((n, p))
    b = np.concatenate([beta, np.zeros(p_extra)])
    t = rng.exponential(1 / (0.5 * np.exp(X @ b)))
    cens = rng.uniform(0, 4, n)
    return make_dataset(np.minimum(t, cens), (t <= cens).astype(int), X, labels=["a"])


def test_eta_conjugate_with_fixed_indicators():
    d = _ss_problem(8, 150, [0.5] * 10)
    cov = tuple(f"x{j}" for j in range(1, 11))
    spec = ModelSpec((CauseSpec("a", "weibull", cov),))
    ss = SpikeSlabConfig(fix_gamma=((1,) * 10,))
    rep = spike_slab_fit(spec, d, ss, SamplerConfig(chains=1, iterations=3000, burn_in=500, thin=1, seed=2))
    eta = rep.sample.column("a.eta").ravel()
    assert stats.kstest(eta, stats.beta(11, 1).cdf).pvalue > 0.001
    assert np.all(rep.sample.column("a.incl.x3") == 1)


def test_fixed_indicators_reduce_to_plain_model():
    d = _ss_problem(9, 200, [0.6, -0.4])
    spec = ModelSpec((CauseSpec("a", "weibull", ("x1", "x2")),))
    cfg = SamplerConfig(chains=2, iterations=8000, burn_in=1000, thin=2, seed=5)
    plain = run_chains(spec, d, config=cfg)
    ss = spike_slab_fit(spec, d, SpikeSlabConfig(fix_gamma=((1, 1),)), cfg).sample
    for name in spec.param_names():
        a, b = plain.column(name), ss.column(name)
        se = math.hypot(mcse_mean(a), mcse_mean(b))
        assert abs(a.mean() - b.mean()) < 3 * se


def _exact_spike_slab_inclusion(d, slab_precision, a, b):
    """Exact inclusion for an exponential model with Gamma(a, b) rate prior.

    The rate integrates out in closed form; coefficients are integrated on a grid.
    """
    t, e, X = d.time, d.cause == 1, d.X
    nev = int(e.sum())
    p = X.shape[1]

    def log_lik_rate_free(B):
        # B: (m, q) coefficient rows for the included columns
        S = np.exp(B @ Xg.T) @ t
        return (a * math.log(b) - gammaln(a) + gammaln(a + nev)
                + B @ Xg[e].sum(axis=0) - (a + nev) * np.log(b + S))

    sd = 1 / math.sqrt(slab_precision)
    lm = []
    gammas = list(itertools.product((0, 1), repeat=p))
    for g in gammas:
        sel = [j for j in range(p) if g[j]]
        Xg = X[:, sel]
        if not sel:
            val = float(log_lik_rate_free(np.zeros((1, 0)))[0])
        else:
            axis = np.linspace(-1.5, 1.5, 301)
            h = axis[1] - axis[0]
            grid = np.array(list(itertools.product(axis, repeat=len(sel))))
            lp = log_lik_rate_free(grid) + stats.norm.logpdf(grid, 0, sd).sum(axis=1)
            val = float(logsumexp(lp) + len(sel) * math.log(h))
        lm.append(val + beta_binomial_log_prior(g))
    prob = np.exp(np.array(lm) - logsumexp(lm))
    return np.array(gammas, dtype=float).T @ prob


def test_spike_slab_matches_exact_enumeration():
    d = _ss_problem(10, 200, [0.25, 0.0])
    a, b, prec = 1.0, 1.0, 1.0
    exact = _exact_spike_slab_inclusion(d, prec, a, b)
    assert 0.1 < exact[0] < 0.95  # informative: neither indicator is settled
    spec = ModelSpec((CauseSpec("a", "piecewise", ("x1", "x2"), (0.0,)),))
    priors = PriorSpec((CausePrior(levels=GammaShapeRate(a, b)),))
    rep = spike_slab_fit(spec, d, SpikeSlabConfig(slab=NormalPrecision(0.0, prec)),
                         SamplerConfig(chains=2, iterations=40000, burn_in=2000, thin=2, seed=3), priors)
    got = [rep.inclusion("a")["x1"], rep.inclusion("a")["x2"]]
    np.testing.assert_allclose(got, exact, atol=0.05)


def test_spike_slab_separates_active_and_null():
    d = _ss_problem(11, 500, [1.0, 0.8], p_extra=4)
    cov = tuple(f"x{j}" for j in range(1, 7))
    spec = ModelSpec((CauseSpec("a", "weibull", cov),))
    rep = spike_slab_fit(spec, d, SpikeSlabConfig(), SamplerConfig(chains=2, iterations=4000, burn_in=1000,
                                                                    thin=2, seed=1))
    inc = rep.inclusion("a")
    assert inc["x1"] > 0.8 and inc["x2"] > 0.8
    assert all(inc[c] < 0.3 for c in cov[2:])
    assert rep.median_model() == {"a": ["x1", "x2"]}
    # effective coefficients are exactly zero when excluded
    g = rep.sample.column("a.incl.x3")
    assert np.all(rep.sample.column("a.beta.x3")[g == 0] == 0.0)


def test_fix_gamma_shape_checked():
    d = _ss_problem(12, 50, [0.5])
    spec = ModelSpec((CauseSpec("a", "weibull", ("x1",)),))
    with pytest.raises(SelectionError):
        spike_slab_fit(spec, d, SpikeSlabConfig(fix_gamma=((1, 1),)), SamplerConfig(iterations=20, burn_in=5))
    with pytest.raises(SelectionError):
        SpikeSlabConfig(a=0.0)


def test_merged_table_keeps_covariate_order():
    rng = np.random.default_rng(13)
    d = weibull_data(rng, 200, [0.7, 0.0, 0.3])
    d = make_dataset(d.time, d.cause, d.X, ["zeta", "alpha", "mid"], ["a"])
    bf = {"a": enumerate_models(cause_view(d, 1))}
    tab = merged_inclusion_table(bf=bf)
    assert list(tab["covariate"]) == ["zeta", "alpha", "mid"]
