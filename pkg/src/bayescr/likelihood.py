"""Exact log-likelihood of competing-risks data under cause-specific hazards.

A censored subject contributes ``log S(t)``; a cause-k event contributes
the log subdensity ``log h_k(t) + log S(t)``.  Since ``log S`` is minus the
sum of cumulative hazards, the total splits into per-cause terms

    l_k = sum_{events k} log h_k(t_i) - sum_i H_k(t_i | x_i)

in which other-cause events act as censored observations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, SubjectRecord
from .hazard import ParameterVector, PiecewiseConstantBaseline, interval_exposures
from .model import ModelSpec, covariate_vectors


class LikelihoodError(ValueError):
    pass


@dataclass(frozen=True)
class LogLikValue:
    total: float
    per_subject: np.ndarray


def _cause_terms(theta: ParameterVector, designs, time, cause):
    """Per-subject, per-cause terms; shape (K, n)."""
    out = np.empty((theta.K, len(time)))
    for k, (cm, X) in enumerate(zip(theta.causes, designs), start=1):
        eta = X @ cm.beta if X.shape[1] else np.zeros(len(time))
        term = -cm.baseline.cumulative(time) * np.exp(eta)
        ev = cause == k
        term[ev] += cm.baseline.log_hazard(time[ev]) + eta[ev]
        out[k - 1] = term
    return out


def subject_log_contributions(data: Dataset, spec: ModelSpec, theta: ParameterVector) -> np.ndarray:
    """Vector of per-subject log-likelihood contributions."""
    if data.n == 0:
        return np.zeros(0)
    return _cause_terms(theta, spec.designs(data), data.time, data.cause).sum(axis=0)


def subject_log_contribution(record: SubjectRecord, spec: ModelSpec, theta: ParameterVector,
                             columns) -> float:
    """Log-likelihood contribution of one subject.

    ``columns`` names the entries of ``record.covariates``.
    """
    xs = covariate_vectors(spec, record.covariates, columns)
    designs = [np.atleast_2d(x) for x in xs]
    t = np.array([record.time])
    return float(_cause_terms(theta, designs, t, np.array([record.cause])).sum())


def cause_log_likelihood(data: Dataset, spec: ModelSpec, theta: ParameterVector, k: int) -> float:
    """Cause-k term with all other-cause events treated as censored."""
    designs = spec.designs(data)
    return float(_cause_terms(theta, designs, data.time, data.cause)[k - 1].sum())


def log_likelihood(data: Dataset, spec: ModelSpec, theta: ParameterVector) -> LogLikValue:
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        per = subject_log_contributions(data, spec, theta)
    bad = ~np.isfinite(per)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise LikelihoodError(f"nonfinite log-likelihood contribution for subject {data.ids[i]}")
    return LogLikValue(total=float(np.sum(per)), per_subject=per)


def log_likelihood_gradient(data: Dataset, spec: ModelSpec, theta: ParameterVector) -> np.ndarray:
    """Gradient with respect to the flattened parameters (see ``ModelSpec.flatten``)."""
    grads = []
    t, logt = data.time, np.log(data.time)
    for k, (cs, cm, X) in enumerate(zip(spec.causes, theta.causes, spec.designs(data)), start=1):
        ev = data.cause == k
        eta = X @ cm.beta if X.shape[1] else np.zeros(data.n)
        m = np.exp(eta)
        H = cm.baseline.cumulative(t)
        if cs.baseline == "weibull":
            a, lam = cm.baseline.shape, cm.baseline.scale
            d_alpha = ev.sum() / a + logt[ev].sum() - np.sum(H * logt * m)
            d_lam = ev.sum() / lam - np.sum(H * m) / lam
            grads.extend([d_alpha, d_lam])
        else:
            E = interval_exposures(cs.knots, t)
            idx = cm.baseline.interval_index(t[ev])
            d = np.bincount(idx, minlength=len(cs.knots))
            grads.extend(d / np.asarray(cm.baseline.levels) - E.T @ m)
        grads.extend(X[ev].sum(axis=0) - X.T @ (H * m))
    return np.array(grads, dtype=float)


class CauseBlock:
    """Cached cause-k log-likelihood for single-parameter updates.

    Keeps the linear predictor, cumulative baseline hazards and the running
    sum ``A = sum_i H0(t_i) exp(eta_i)`` so that a proposal for one
    parameter costs O(1) (Weibull scale) or one pass over the subjects.
    Proposal methods return the candidate log-likelihood and stage the
    change; :meth:`commit` applies the staged change.
    """

    def __init__(self, time, cause, X, k, baseline, knots=None):
        self.t = np.asarray(time, dtype=float)
        self.log_t = np.log(self.t)
        self.event = np.asarray(cause) == k
        self.n_events = int(self.event.sum())
        self.X = np.asarray(X, dtype=float).reshape(len(self.t), -1)
        self.Xcols = np.ascontiguousarray(self.X.T)
        self.x_event_sum = self.X[self.event].sum(axis=0)
        self.sum_log_t_event = float(self.log_t[self.event].sum())
        self.kind = baseline
        if baseline == "piecewise":
            self.knots = tuple(knots)
            E = interval_exposures(self.knots, self.t)
            self.Ecols = np.ascontiguousarray(E.T)
            idx = PiecewiseConstantBaseline(self.knots, (1.0,) * len(self.knots)).interval_index(
                self.t[self.event])
            self.d = np.bincount(idx, minlength=len(self.knots)).astype(float)
        self._staged = None

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def set_state(self, base, beta):
        """Recompute every cached quantity from scratch."""
        self.base = np.array(base, dtype=float)
        self.beta = np.array(beta, dtype=float)
        self.eta = self.Xcols.T @ self.beta if self.p else np.zeros(len(self.t))
        self.exp_eta = np.exp(self.eta)
        self.event_eta = float(self.x_event_sum @ self.beta) if self.p else 0.0
        self.H0 = self._H0(self.base)
        self.event_log_h0 = self._event_log_h0(self.base)
        self.A = float(self.H0 @ self.exp_eta)
        self.ll = self.event_log_h0 + self.event_eta - self.A
        self._staged = None
        return self.ll

    def _H0(self, base):
        if self.kind == "weibull":
            with np.errstate(over="ignore"):
                return base[1] * np.exp(base[0] * self.log_t)
        return self.Ecols.T @ base

    def _event_log_h0(self, base):
        if self.kind == "weibull":
            alpha, lam = base
            return self.n_events * (np.log(lam) + np.log(alpha)) + (alpha - 1.0) * self.sum_log_t_event
        return float(self.d @ np.log(base))

    def loglik(self, base, beta) -> float:
        """Stateless evaluation."""
        base = np.asarray(base, dtype=float)
        beta = np.asarray(beta, dtype=float)
        eta = self.X @ beta if self.p else np.zeros(len(self.t))
        return float(self._event_log_h0(base) + self.x_event_sum @ beta - self._H0(base) @ np.exp(eta))

    def propose_beta(self, j: int, value: float) -> float:
        delta = value - self.beta[j]
        eta = self.eta + delta * self.Xcols[j]
        with np.errstate(over="ignore"):
            # an overflowing proposal evaluates to -inf and is rejected
            exp_eta = np.exp(eta)
        A = float(self.H0 @ exp_eta)
        event_eta = self.event_eta + delta * self.x_event_sum[j]
        self._staged = ("beta", j, value, eta, exp_eta, A, event_eta)
        return self.event_log_h0 + event_eta - A

    def propose_baseline(self, r: int, value: float) -> float:
        base = self.base.copy()
        base[r] = value
        if self.kind == "weibull" and r == 1:
            ratio = value / self.base[1]
            A = self.A * ratio
            H0 = None
        elif self.kind == "weibull":
            H0 = self._H0(base)
            A = float(H0 @ self.exp_eta)
        else:
            delta = value - self.base[r]
            H0 = None
            A = self.A + delta * float(self.Ecols[r] @ self.exp_eta)
        event_log_h0 = self._event_log_h0(base)
        self._staged = ("base", r, base, H0, A, event_log_h0)
        return event_log_h0 + self.event_eta - A

    def commit(self):
        st = self._staged
        if st is None:
            raise RuntimeError("nothing staged")
        if st[0] == "beta":
            _, j, value, self.eta, self.exp_eta, self.A, self.event_eta = st
            self.beta[j] = value
        else:
            _, r, base, H0, A, event_log_h0 = st
            if H0 is None:
                if self.kind == "weibull":
                    self.H0 = self.H0 * (base[1] / self.base[1])
                else:
                    self.H0 = self.H0 + (base[r] - self.base[r]) * self.Ecols[r]
            else:
                self.H0 = H0
            self.base, self.A, self.event_log_h0 = base, A, event_log_h0
        self.ll = self.event_log_h0 + self.event_eta - self.A
        self._staged = None
        return self.ll
