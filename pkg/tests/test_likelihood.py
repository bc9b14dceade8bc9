import math

import numpy as np
import pytest

from bayescr.data import SubjectRecord
from bayescr.likelihood import (
    CauseBlock,
    LikelihoodError,
    cause_log_likelihood,
    log_likelihood,
    log_likelihood_gradient,
    subject_log_contribution,
    subject_log_contributions,
)
from bayescr.model import CauseSpec, ModelSpec

from conftest import make_dataset, theta_const

SPEC0 = ModelSpec((CauseSpec("a"), CauseSpec("b")))


def test_censored_contribution():
    rec = SubjectRecord("1", 0.8, 0, np.zeros(0))
    assert subject_log_contribution(rec, SPEC0, theta_const(0.5, 1.5), []) == pytest.approx(-1.6, abs=1e-15)


def test_event_contribution():
    rec = SubjectRecord("1", 1.0, 1, np.zeros(0))
    assert subject_log_contribution(rec, SPEC0, theta_const(1.0, 1.0), []) == pytest.approx(-2.0, abs=1e-15)


def test_exponential_density_reduction():
    spec = ModelSpec((CauseSpec("a"),))
    rec = SubjectRecord("1", 2.5, 1, np.zeros(0))
    lam = 0.3
    assert subject_log_contribution(rec, spec, theta_const(lam), []) == pytest.approx(
        math.log(lam) - lam * 2.5, rel=1e-14)


def test_empty_dataset():
    d = make_dataset([], np.zeros(0, dtype=int), labels=["a", "b"])
    assert log_likelihood(d, SPEC0, theta_const(1.0, 1.0)).total == 0.0


def test_two_subject_hand_computation():
    # subject 1: cause 2 at t=2 with x=1; subject 2: censored at t=0.5 with x=-1
    spec = ModelSpec((CauseSpec("a", "weibull", ("x1",)),
                      CauseSpec("b", "piecewise", ("x1",), knots=(0.0, 1.0))))
    theta = spec.unflatten([2.0, 0.5, 0.3, 0.4, 0.9, -0.2])
    d = make_dataset([2.0, 0.5], [2, 0], [[1.0], [-1.0]], labels=["a", "b"])
    # H_a = 0.5 t^2 e^{0.3x}; H_b = (0.4 min(t,1) + 0.9 (t-1)+) e^{-0.2x}; h_b(2) = 0.9
    s1 = (math.log(0.9) - 0.2 - 0.5 * 4 * math.exp(0.3) - (0.4 + 0.9) * math.exp(-0.2))
    s2 = -0.5 * 0.25 * math.exp(-0.3) - 0.4 * 0.5 * math.exp(0.2)
    v = log_likelihood(d, spec, theta)
    np.testing.assert_allclose(v.per_subject, [s1, s2], rtol=1e-14)
    assert v.total == pytest.approx(s1 + s2, rel=1e-14)


def _random_problem(rng, n=40):
    spec = ModelSpec((CauseSpec("a", "weibull", ("x1", "x2")),
                      CauseSpec("b", "piecewise", ("x2",), knots=(0.0, 0.5, 2.0))))
    X = rng.standard_normal((n, 2))
    d = make_dataset(rng.exponential(1.5, n), rng.integers(0, 3, n), X, labels=["a", "b"])
    theta = spec.unflatten([rng.uniform(0.5, 2), rng.uniform(0.2, 1), *rng.normal(0, 0.5, 2),
                            *rng.uniform(0.1, 1.0, 3), rng.normal(0, 0.5)])
    return spec, d, theta


def test_factorization(rng):
    for _ in range(5):
        spec, d, theta = _random_problem(rng)
        total = log_likelihood(d, spec, theta).total
        parts = sum(cause_log_likelihood(d, spec, theta, k) for k in (1, 2))
        assert total == pytest.approx(parts, rel=1e-10)
        v = log_likelihood(d, spec, theta)
        assert v.total == pytest.approx(v.per_subject.sum(), rel=1e-10)


def test_gradient_finite_differences(rng):
    for _ in range(5):
        spec, d, theta = _random_problem(rng)
        x0 = spec.flatten(theta)
        g = log_likelihood_gradient(d, spec, theta)
        h = 1e-5
        for j in range(len(x0)):
            xp, xm = x0.copy(), x0.copy()
            xp[j] += h
            xm[j] -= h
            fd = (log_likelihood(d, spec, spec.unflatten(xp)).total
                  - log_likelihood(d, spec, spec.unflatten(xm)).total) / (2 * h)
            assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)


def test_order_invariance(rng):
    spec, d, theta = _random_problem(rng)
    perm = rng.permutation(d.n)
    assert log_likelihood(d.subset(perm), spec, theta).total == pytest.approx(
        log_likelihood(d, spec, theta).total, rel=1e-12)


def test_nonfinite_reports_subject():
    spec = ModelSpec((CauseSpec("a", "weibull", ("x1",)),))
    d = make_dataset([1.0, 2.0], [1, 1], [[0.0], [1e6]], labels=["a"])
    theta = spec.unflatten([1.0, 1.0, 1.0])
    with pytest.raises(LikelihoodError, match="subject 2"):
        log_likelihood(d, spec, theta)


class TestCauseBlock:
    def _block(self, rng, kind):
        spec, d, theta = _random_problem(rng)
        k = 1 if kind == "weibull" else 2
        X = spec.designs(d)[k - 1]
        c = spec.causes[k - 1]
        blk = CauseBlock(d.time, d.cause, X, k, c.baseline, c.knots)
        cm = theta.causes[k - 1]
        return spec, d, theta, blk, np.array(cm.baseline.params), cm.beta.copy(), k

    @pytest.mark.parametrize("kind", ["weibull", "piecewise"])
    def test_matches_full_likelihood(self, rng, kind):
        spec, d, theta, blk, base, beta, k = self._block(rng, kind)
        ll = blk.set_state(base, beta)
        assert ll == pytest.approx(cause_log_likelihood(d, spec, theta, k), rel=1e-12)

    @pytest.mark.parametrize("kind", ["weibull", "piecewise"])
    def test_proposals_and_commits(self, rng, kind):
        spec, d, theta, blk, base, beta, k = self._block(rng, kind)
        blk.set_state(base, beta)
        for _ in range(30):
            if rng.random() < 0.5 and len(beta):
                j = int(rng.integers(len(beta)))
                val = beta[j] + rng.normal(0, 0.3)
                cand = beta.copy()
                cand[j] = val
                ll = blk.propose_beta(j, val)
                assert ll == pytest.approx(blk.loglik(base, cand), rel=1e-10)
                if rng.random() < 0.5:
                    blk.commit()
                    beta = cand
            else:
                r = int(rng.integers(len(base)))
                cand = base.copy()
                cand[r] = base[r] * math.exp(rng.normal(0, 0.3))
                ll = blk.propose_baseline(r, cand[r])
                assert ll == pytest.approx(blk.loglik(cand, beta), rel=1e-10)
                if rng.random() < 0.5:
                    blk.commit()
                    base = cand
            assert blk.ll == pytest.approx(blk.loglik(base, beta), rel=1e-10)
        fresh = blk.ll
        assert blk.set_state(base, beta) == pytest.approx(fresh, rel=1e-10)

    def test_commit_without_proposal(self, rng):
        *_, blk, base, beta, _ = self._block(rng, "weibull")
        blk.set_state(base, beta)
        with pytest.raises(RuntimeError):
            blk.commit()


def test_contributions_vector_matches_records(rng):
    spec, d, theta = _random_problem(rng, n=10)
    per = subject_log_contributions(d, spec, theta)
    for i, rec in enumerate(d.records):
        assert per[i] == pytest.approx(subject_log_contribution(rec, spec, theta, d.columns), rel=1e-12)
