import math
import warnings

import numpy as np
import pytest

from bayescr.assess import (
    AssessmentError,
    assess,
    compare_models,
    cpo,
    cpo_from_loglik,
    dic,
    lpml,
    pointwise_loglik,
    posterior_mean_parameters,
    waic,
    waic_sample,
)
from bayescr.likelihood import log_likelihood
from bayescr.model import CauseSpec, ModelSpec
from bayescr.priors import CausePrior, GammaShapeRate, PriorSpec
from bayescr.sampler import PosteriorSample, SamplerConfig, run_chains

from conftest import make_dataset

SPEC2 = ModelSpec((CauseSpec("a"), CauseSpec("b")))
EXP_SPEC = ModelSpec((CauseSpec("a", "piecewise", (), (0.0,)),))


def sample_of(spec, rows, chains=1):
    rows = np.asarray(rows, dtype=float)
    M = len(rows) // chains
    draws = rows.reshape(chains, M, -1)
    its = np.tile(np.arange(1, M + 1), (chains, 1))
    return PosteriorSample(spec, spec.param_names(), draws, its)


# two subjects: censored at 1; cause-1 event at 0.5
HAND_DATA = make_dataset([1.0, 0.5], [0, 1], labels=["a", "b"])
HAND_RATES = [(0.5, 1.0), (1.0, 0.5), (0.8, 0.7)]


def hand_likelihoods():
    L1 = [math.exp(-(l1 + l2)) for l1, l2 in HAND_RATES]
    L2 = [l1 * math.exp(-(l1 + l2) * 0.5) for l1, l2 in HAND_RATES]
    return L1, L2


def hand_sample():
    return sample_of(SPEC2, [[1.0, l1, 1.0, l2] for l1, l2 in HAND_RATES])


def test_pointwise_matrix():
    ll = pointwise_loglik(hand_sample(), HAND_DATA)
    L1, L2 = hand_likelihoods()
    np.testing.assert_allclose(ll, np.log(np.column_stack([L1, L2])), rtol=1e-13)


def test_hand_cpo():
    L1, L2 = hand_likelihoods()
    expected = [3 / sum(1 / v for v in L) for L in (L1, L2)]
    np.testing.assert_allclose(cpo(hand_sample(), HAND_DATA).values, expected, rtol=1e-12)


def test_hand_waic():
    w, p = waic_sample(hand_sample(), HAND_DATA)
    total_lppd, total_p = 0.0, 0.0
    for L in hand_likelihoods():
        logs = [math.log(v) for v in L]
        mean = sum(logs) / 3
        total_lppd += math.log(sum(L) / 3)
        total_p += sum((v - mean) ** 2 for v in logs) / 2
    assert p == pytest.approx(total_p, rel=1e-12)
    assert w == pytest.approx(-2 * (total_lppd - total_p), rel=1e-12)


def test_hand_dic():
    L1, L2 = hand_likelihoods()
    dev = [-2 * (math.log(a) + math.log(b)) for a, b in zip(L1, L2)]
    dbar = sum(dev) / 3
    g1 = math.exp(sum(math.log(r[0]) for r in HAND_RATES) / 3)
    g2 = math.exp(sum(math.log(r[1]) for r in HAND_RATES) / 3)
    d_hat = -2 * (-(g1 + g2) + math.log(g1) - (g1 + g2) * 0.5)
    d, p = dic(hand_sample(), HAND_DATA)
    assert p == pytest.approx(dbar - d_hat, rel=1e-12)
    assert d == pytest.approx(dbar + (dbar - d_hat), rel=1e-12)


def test_plugin_means():
    s = hand_sample()
    theta = posterior_mean_parameters(s)
    # shape column is constant and kept exactly; rates use log-scale means
    assert theta[0] == 1.0 and theta[2] == 1.0
    assert theta[1] == pytest.approx((0.5 * 1.0 * 0.8) ** (1 / 3), rel=1e-14)


class TestDegenerate:
    def _sample(self, M=50):
        spec = ModelSpec((CauseSpec("a", "weibull", ("x1",)), CauseSpec("b", "piecewise", ("x1",), (0.0, 1.0))))
        row = [1.3, 0.4, 0.25, 0.2, 0.5, -0.3]
        return spec, sample_of(spec, [row] * M, chains=2)

    def _data(self):
        rng = np.random.default_rng(1)
        n = 40
        return make_dataset(rng.exponential(1.0, n), rng.integers(0, 3, n), rng.standard_normal((n, 1)),
                            labels=["a", "b"])

    def test_identities_hold_exactly(self):
        spec, s = self._sample()
        d = self._data()
        theta = spec.unflatten(s.pooled()[0])
        per = pointwise_loglik(sample_of(spec, [s.pooled()[0]]), d)[0]
        rep = assess(s, d)
        assert rep.p_d == 0.0
        assert rep.p_waic == 0.0
        np.testing.assert_array_equal(rep.cpo.log_cpo, per)
        assert rep.waic == -2 * float(np.sum(per))
        assert rep.dic == pytest.approx(-2 * log_likelihood(d, spec, theta).total, rel=1e-13)
        assert not rep.cpo.unstable.any()

    def test_censored_cpo_at_most_one(self):
        spec, s = self._sample()
        d = self._data()
        vals = cpo(s, d).values
        assert np.all(vals[d.cause == 0] <= 1.0)


def test_constant_total_hazard_cpo():
    # total hazard 2 in every draw, censored at t=1
    d = make_dataset([1.0], [0], labels=["a", "b"])
    s = sample_of(SPEC2, [[1.0, 0.5, 1.0, 1.5], [1.0, 1.2, 1.0, 0.8], [1.0, 1.9, 1.0, 0.1]])
    c = cpo(s, d)
    assert c.values[0] == pytest.approx(math.exp(-2), rel=1e-12)
    assert lpml(c) == pytest.approx(-2.0, rel=1e-12)


def test_lpml_from_values():
    assert lpml([math.exp(-2)]) == pytest.approx(-2.0, rel=1e-15)
    with pytest.raises(AssessmentError):
        lpml([0.5, 0.0])


def test_lpml_additive_over_concatenation():
    s = hand_sample()
    d1 = make_dataset([1.0, 0.5], [0, 1], labels=["a", "b"])
    d2 = make_dataset([2.0, 0.3, 0.7], [2, 1, 0], labels=["a", "b"])
    both = make_dataset([1.0, 0.5, 2.0, 0.3, 0.7], [0, 1, 2, 1, 0], labels=["a", "b"])
    assert lpml(cpo(s, both)) == pytest.approx(lpml(cpo(s, d1)) + lpml(cpo(s, d2)), rel=1e-13)


def test_zero_likelihood_flagged():
    ll = np.array([[-1.0, -2.0], [-np.inf, -2.5]])
    with pytest.warns(UserWarning, match="zero likelihood"):
        c = cpo_from_loglik(ll)
    assert c.zero.tolist() == [True, False]
    assert c.values[0] == 0.0
    with pytest.raises(AssessmentError):
        lpml(c)


def test_instability_and_truncation():
    M = 2000
    ll = np.full((M, 2), -1.0)
    ll[0, 0] = -40.0  # one draw dominates the harmonic mean
    c = cpo_from_loglik(ll)
    assert c.unstable.tolist() == [True, False]
    # the truncated estimate drops the two largest inverse-likelihood terms
    assert c.log_cpo_truncated[0] == pytest.approx(-1.0, rel=1e-12)
    expected = -math.log(((M - 1) * math.e + math.exp(40.0)) / M)
    assert c.log_cpo[0] == pytest.approx(expected, rel=1e-12)


def test_order_invariance():
    s = hand_sample()
    d = make_dataset([1.0, 0.5, 2.0, 0.3], [0, 1, 2, 1], labels=["a", "b"])
    perm_draws = sample_of(SPEC2, s.pooled()[[2, 0, 1]])
    perm_subj = d.subset(np.array([3, 1, 0, 2]))
    base = assess(s, d)
    for s2, d2 in ((perm_draws, d), (s, perm_subj)):
        rep = assess(s2, d2)
        assert rep.lpml == pytest.approx(base.lpml, rel=1e-12)
        assert rep.dic == pytest.approx(base.dic, rel=1e-12)
        assert rep.waic == pytest.approx(base.waic, rel=1e-12)


def _conjugate_fit(seed=4, n=60):
    rng = np.random.default_rng(seed)
    t = rng.exponential(1 / 0.5, n)
    c = rng.exponential(1 / 0.25, n)
    d = make_dataset(np.minimum(t, c), (t <= c).astype(int), labels=["a"])
    a, b = 2.0, 1.0
    priors = PriorSpec((CausePrior(levels=GammaShapeRate(a, b)),))
    s = run_chains(EXP_SPEC, d, priors, SamplerConfig(chains=2, iterations=26000, burn_in=1000, thin=5, seed=9))
    return d, s, a, b


def test_conjugate_dic_and_leave_one_out():
    d, s, a, b = _conjugate_fit()
    assert s.n_draws == 10000
    _, p_d = dic(s, d)
    assert abs(p_d - 1.0) < 0.15
    # exact leave-one-out predictive under the Gamma posterior without subject i
    A = a + d.cause.sum() - d.cause
    B = b + d.time.sum() - d.time
    log_pred = A * np.log(B) - A * np.log(B + d.time)
    ev = d.cause == 1
    log_pred[ev] += np.log(A[ev]) - np.log(B[ev] + d.time[ev])
    rel = np.abs(cpo(s, d).values / np.exp(log_pred) - 1)
    assert rel.max() < 0.05


def test_compare_models_flags():
    s = hand_sample()
    d = make_dataset([1.0, 0.5, 2.0], [0, 1, 2], labels=["a", "b"])
    tight = sample_of(SPEC2, [[1.0, 0.7, 1.0, 0.7]] * 3)
    tab = compare_models({"spread": assess(s, d), "tight": assess(tight, d)})
    assert tab["best_DIC"].sum() == 1 and tab["best_LPML"].sum() == 1
    assert set(tab.columns) >= {"model", "DIC", "pD", "WAIC", "pWAIC", "LPML"}


def test_waic_nonfinite_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        waic(np.array([[-1.0, -np.inf], [-1.0, -1.0]]))
    assert any("nonfinite" in str(x.message) for x in w)
