"""Model assessment from posterior draws: CPO, LPML, DIC and WAIC.

A subject's likelihood term is its survival probability when censored and
its cause-specific subdensity when it had an event, so every criterion
works from the matrix of per-draw, per-subject log-likelihood terms.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .data import Dataset
from .likelihood import _cause_terms
from .model import ModelSpec
from .sampler import PosteriorSample


class AssessmentError(ValueError):
    pass


def _subject_terms(theta, designs, data: Dataset) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        return _cause_terms(theta, designs, data.time, data.cause).sum(axis=0)


def pointwise_loglik(sample: PosteriorSample, data: Dataset, spec: ModelSpec | None = None
                     ) -> np.ndarray:
    """Log-likelihood of each subject under each draw; shape ``(draws, n)``."""
    spec = spec or sample.spec
    designs = spec.designs(data)
    out = np.empty((sample.n_draws, data.n))
    for m, theta in enumerate(sample.parameter_vectors()):
        out[m] = _subject_terms(theta, designs, data)
    return out


def _shifted_mean(x, axis=0):
    # centring on the first entry makes the mean of identical values exact
    x = np.asarray(x, dtype=float)
    ref = np.take(x, [0], axis=axis)
    return np.squeeze(ref, axis=axis) + np.mean(x - ref, axis=axis)


def _log_mean_exp(x, axis=0):
    x = np.asarray(x, dtype=float)
    top = np.max(x, axis=axis, keepdims=True)
    with np.errstate(invalid="ignore"):
        out = np.log(np.mean(np.exp(x - top), axis=axis)) + np.squeeze(top, axis=axis)
    return out


@dataclass
class CPOResult:
    log_cpo: np.ndarray
    unstable: np.ndarray
    zero: np.ndarray
    log_cpo_truncated: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_cpo)


def cpo_from_loglik(ll: np.ndarray, top_share: float = 0.01, drop_share: float = 0.001
                    ) -> CPOResult:
    """Harmonic-mean CPO for each column of a ``(draws, n)`` log-likelihood matrix.

    A subject is flagged unstable when the largest ``top_share`` of its
    inverse-likelihood terms carry more than half of their sum.  The
    truncated variant drops the largest ``drop_share`` of those terms.
    """
    ll = np.asarray(ll, dtype=float)
    M, n = ll.shape
    if M == 0:
        raise AssessmentError("empty posterior sample")
    neg = -ll
    zero = np.any(np.isposinf(neg) | np.isnan(neg), axis=0)
    log_cpo = np.empty(n)
    trunc = np.empty(n)
    unstable = np.zeros(n, dtype=bool)
    n_top = max(1, math.ceil(top_share * M))
    n_drop = int(math.floor(drop_share * M))
    for i in range(n):
        if zero[i]:
            log_cpo[i] = trunc[i] = -np.inf
            continue
        col = neg[:, i]
        lse = logsumexp(col)
        log_cpo[i] = -float(_log_mean_exp(col))
        srt = np.sort(col)
        if M > 1:
            top = logsumexp(srt[-n_top:])
            unstable[i] = top - lse > math.log(0.5)
        kept = srt[:M - n_drop] if n_drop else srt
        trunc[i] = -float(_log_mean_exp(kept))
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} subject(s) have zero likelihood under some draw; CPO set to 0")
    return CPOResult(log_cpo, unstable, zero, trunc)


def cpo(sample: PosteriorSample, data: Dataset, spec: ModelSpec | None = None) -> CPOResult:
    return cpo_from_loglik(pointwise_loglik(sample, data, spec))


def lpml(cpos) -> float:
    """Sum of log CPO values; accepts a :class:`CPOResult` or an array of CPOs."""
    if isinstance(cpos, CPOResult):
        logs = cpos.log_cpo
    else:
        vals = np.asarray(cpos, dtype=float)
        if np.any(~(vals > 0)):
            raise AssessmentError("LPML undefined: zero CPO present")
        logs = np.log(vals)
    if np.any(np.isneginf(logs)):
        raise AssessmentError("LPML undefined: zero CPO present")
    return float(np.sum(logs))


def posterior_mean_parameters(sample: PosteriorSample) -> np.ndarray:
    """Plug-in parameter vector: log-scale means for positive parameters, arithmetic otherwise."""
    spec = sample.spec
    draws = sample.pooled()[:, :spec.n_params]
    pos = spec.positive_mask()
    out = np.empty(spec.n_params)
    names = spec.param_names()
    for j in range(spec.n_params):
        col = draws[:, j]
        if np.all(col == col[0]):
            out[j] = col[0]
        elif pos[j]:
            if np.any(col <= 0):
                raise AssessmentError(f"nonpositive draws for {names[j]}")
            out[j] = math.exp(float(np.mean(np.log(col))))
        else:
            out[j] = float(np.mean(col))
        if not math.isfinite(out[j]):
            raise AssessmentError(f"posterior mean of {names[j]} is not finite")
    return out


def dic(sample: PosteriorSample, data: Dataset, spec: ModelSpec | None = None,
        ll: np.ndarray | None = None) -> tuple[float, float]:
    """``(DIC, p_D)`` with ``p_D = mean deviance - deviance at the plug-in mean``."""
    spec = spec or sample.spec
    ll = pointwise_loglik(sample, data, spec) if ll is None else ll
    dev = np.array([-2.0 * float(np.sum(row)) for row in ll])
    dbar = float(_shifted_mean(dev))
    try:
        theta_bar = spec.unflatten(posterior_mean_parameters(sample))
    except ValueError as exc:
        raise AssessmentError(f"plug-in parameters outside the support: {exc}") from exc
    terms = _subject_terms(theta_bar, spec.designs(data), data)
    if not np.all(np.isfinite(terms)):
        i = int(np.flatnonzero(~np.isfinite(terms))[0])
        raise AssessmentError(f"plug-in log-likelihood is not finite for subject {data.ids[i]}")
    d_hat = -2.0 * float(np.sum(terms))
    p_d = dbar - d_hat
    return dbar + p_d, p_d


def waic(ll: np.ndarray) -> tuple[float, float]:
    """``(WAIC, p_WAIC)`` from a ``(draws, n)`` log-likelihood matrix."""
    ll = np.asarray(ll, dtype=float)
    M = ll.shape[0]
    if not np.all(np.isfinite(ll)):
        warnings.warn("nonfinite pointwise log-likelihood terms in WAIC")
    lppd = _log_mean_exp(ll, axis=0)
    p = (ll - ll[:1]).var(axis=0, ddof=1) if M > 1 else np.zeros(ll.shape[1])
    return float(-2.0 * np.sum(lppd - p)), float(np.sum(p))


def waic_sample(sample: PosteriorSample, data: Dataset, spec: ModelSpec | None = None):
    return waic(pointwise_loglik(sample, data, spec))


@dataclass
class AssessmentReport:
    ids: tuple[str, ...]
    cpo: CPOResult
    lpml: float
    lpml_truncated: float
    dic: float
    p_d: float
    waic: float
    p_waic: float

    def cpo_table(self) -> pd.DataFrame:
        return pd.DataFrame({
            "id": list(self.ids),
            "cpo": self.cpo.values,
            "log_cpo": self.cpo.log_cpo,
            "log_cpo_truncated": self.cpo.log_cpo_truncated,
            "unstable": self.cpo.unstable,
        })

    def criteria(self) -> dict[str, float]:
        return {"DIC": self.dic, "pD": self.p_d, "WAIC": self.waic, "pWAIC": self.p_waic,
                "LPML": self.lpml, "LPML_truncated": self.lpml_truncated,
                "unstable_cpo": int(self.cpo.unstable.sum())}


def assess(sample: PosteriorSample, data: Dataset, spec: ModelSpec | None = None) -> AssessmentReport:
    spec = spec or sample.spec
    ll = pointwise_loglik(sample, data, spec)
    c = cpo_from_loglik(ll)
    lp = float(np.sum(c.log_cpo))
    lp_t = float(np.sum(c.log_cpo_truncated))
    d, pd_ = dic(sample, data, spec, ll)
    w, pw = waic(ll)
    return AssessmentReport(data.ids, c, lp, lp_t, d, pd_, w, pw)


def compare_models(reports: dict[str, AssessmentReport]) -> pd.DataFrame:
    """One row per model; flags the lowest DIC and the highest LPML."""
    rows = [{"model": name, **r.criteria()} for name, r in reports.items()]
    df = pd.DataFrame(rows)
    if len(df):
        df["best_DIC"] = df["DIC"] == df["DIC"].min()
        df["best_LPML"] = df["LPML"] == df["LPML"].max()
    return df


__all__ = [
    "AssessmentError",
    "AssessmentReport",
    "CPOResult",
    "assess",
    "compare_models",
    "cpo",
    "cpo_from_loglik",
    "dic",
    "lpml",
    "pointwise_loglik",
    "posterior_mean_parameters",
    "waic",
    "waic_sample",
]
