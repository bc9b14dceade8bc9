"""Variable selection for one cause at a time.

Two procedures:

* a Gibbs search over inclusion vectors using Laplace-approximated
  marginal likelihoods under a unit-information normal prior, with
  Rao-Blackwellized inclusion probabilities;
* a spike-and-slab prior in which the linear predictor uses
  ``gamma_j * beta_j`` and the indicators are sampled jointly with the
  model parameters (see :func:`spike_slab_fit`).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import optimize
from scipy.special import betaln, expit, logsumexp

from .data import Dataset
from .model import ModelSpec
from .priors import NormalPrecision, PriorSpec
from .sampler import PosteriorSample, SamplerConfig, run_chains

MAX_SEARCH_COVARIATES = 30
COLLINEAR_THRESHOLD = 0.999


class SelectionError(ValueError):
    pass


@dataclass(frozen=True)
class SpikeSlabConfig:
    """Slab prior for included coefficients and Beta(a, b) prior on the inclusion rate.

    ``fix_gamma`` (one 0/1 vector per cause) freezes the indicators.
    """

    slab: NormalPrecision = field(default_factory=NormalPrecision)
    a: float = 1.0
    b: float = 1.0
    fix_gamma: tuple | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise SelectionError("Beta hyperparameters must be > 0")


@dataclass(frozen=True)
class CauseData:
    """One cause's view of the data: other-cause events count as censored."""

    time: np.ndarray
    event: np.ndarray
    X: np.ndarray
    columns: tuple[str, ...]
    baseline: str = "weibull"
    knots: tuple[float, ...] | None = None

    @property
    def n(self) -> int:
        return len(self.time)

    @property
    def p(self) -> int:
        return self.X.shape[1]


def cause_view(data: Dataset, k: int, columns=None, baseline="weibull", knots=None) -> CauseData:
    columns = list(data.columns if columns is None else columns)
    idx = [data.columns.index(c) for c in columns]
    if baseline == "piecewise" and knots is None:
        from .model import DEFAULT_KNOTS_FINE
        knots = DEFAULT_KNOTS_FINE
    return CauseData(time=data.time, event=(data.cause == k), X=data.X[:, idx],
                     columns=tuple(columns), baseline=baseline,
                     knots=None if knots is None else tuple(knots))


def check_collinearity(view: CauseData):
    """Reject column pairs with |correlation| above the threshold."""
    X = view.X
    if view.p < 2:
        return
    sd = X.std(axis=0)
    ok = sd > 0
    Z = (X[:, ok] - X[:, ok].mean(axis=0)) / sd[ok]
    corr = Z.T @ Z / len(Z)
    names = [c for c, keep in zip(view.columns, ok) if keep]
    iu = np.triu_indices(len(names), 1)
    bad = np.abs(corr[iu]) > COLLINEAR_THRESHOLD
    if np.any(bad):
        pairs = [f"{names[i]}/{names[j]}" for i, j in zip(iu[0][bad], iu[1][bad])]
        raise SelectionError(f"collinear covariates: {', '.join(pairs)}")


class _NullFit:
    """Baseline fitted without covariates; gives H0(t_i) and the event log-hazard sum."""

    def __init__(self, view: CauseData):
        t, ev = view.time, view.event
        d = int(ev.sum())
        if d == 0:
            raise SelectionError("cause has no events; marginal likelihoods are undefined")
        if view.baseline == "weibull":
            log_t = np.log(t)
            slt = float(log_t[ev].sum())

            def negprof(la):
                a = math.exp(la)
                s = float(np.exp(a * log_t).sum())
                return -(d * la + d * math.log(d / s) + (a - 1.0) * slt - d)

            res = optimize.minimize_scalar(negprof, bounds=(-7.0, 4.0), method="bounded",
                                           options={"xatol": 1e-10})
            a = math.exp(res.x)
            lam = d / float(np.exp(a * log_t).sum())
            self.params = (a, lam)
            self.H0 = lam * np.exp(a * log_t)
            self.event_log_h0 = d * (math.log(lam) + math.log(a)) + (a - 1.0) * slt
        else:
            from .hazard import interval_exposures
            E = interval_exposures(view.knots, t)
            idx = np.clip(np.searchsorted(view.knots, t[ev], "left") - 1, 0, len(view.knots) - 1)
            dr = np.bincount(idx, minlength=len(view.knots)).astype(float)
            er = E.sum(axis=0)
            levels = np.where(dr > 0, dr / np.where(er > 0, er, 1.0), 0.0)
            self.params = tuple(levels)
            self.H0 = E @ levels
            pos = dr > 0
            self.event_log_h0 = float(dr[pos] @ np.log(levels[pos]))
        self.loglik = self.event_log_h0 - float(self.H0.sum())


class MarginalCache:
    """Laplace log marginals for one cause, memoized by inclusion vector."""

    def __init__(self, view: CauseData, c: float = 1.0):
        if not c > 0:
            raise SelectionError("prior scale c must be > 0")
        self.view = view
        self.c = c
        self.null = _NullFit(view)
        self.info0 = (view.X * self.null.H0[:, None]).T @ view.X
        self.x_event = view.X[view.event].sum(axis=0)
        self._cache: dict[tuple, float] = {}

    def __call__(self, gamma) -> float:
        key = tuple(int(g) for g in gamma)
        if key not in self._cache:
            self._cache[key] = self._compute(key)
        return self._cache[key]

    def _compute(self, key) -> float:
        sel = [j for j, g in enumerate(key) if g]
        if not sel:
            return self.null.loglik
        X = self.view.X[:, sel]
        H0 = self.null.H0
        info = self.info0[np.ix_(sel, sel)]
        try:
            np.linalg.cholesky(info)
        except np.linalg.LinAlgError:
            names = [self.view.columns[j] for j in sel]
            raise SelectionError(f"singular information matrix for covariates {names}") from None
        P = info / (self.c * self.view.n)
        xe = self.x_event[sel]

        def loglik(b):
            return self.null.event_log_h0 + xe @ b - H0 @ np.exp(X @ b)

        b = np.zeros(len(sel))
        for _ in range(100):
            w = H0 * np.exp(X @ b)
            grad = xe - X.T @ w - P @ b
            negH = (X * w[:, None]).T @ X + P
            step = np.linalg.solve(negH, grad)
            # halve until the log posterior does not decrease
            f0 = loglik(b) - 0.5 * b @ P @ b
            for _ in range(50):
                nb = b + step
                if loglik(nb) - 0.5 * nb @ P @ nb >= f0 - 1e-12:
                    break
                step = step / 2
            b = nb
            if np.max(np.abs(step)) < 1e-10:
                break
        w = H0 * np.exp(X @ b)
        negH = (X * w[:, None]).T @ X + P
        dim = len(sel)
        _, logdet_P = np.linalg.slogdet(P)
        _, logdet_H = np.linalg.slogdet(negH)
        log_prior = 0.5 * logdet_P - 0.5 * dim * math.log(2 * math.pi) - 0.5 * b @ P @ b
        return float(loglik(b) + log_prior + 0.5 * dim * math.log(2 * math.pi) - 0.5 * logdet_H)


def laplace_log_marginal(view: CauseData, gamma, c: float = 1.0) -> float:
    """Laplace approximation to the log marginal likelihood of one inclusion vector.

    The baseline is held at its covariate-free maximum likelihood value;
    coefficients get the prior ``N(0, c * n * I0^{-1})`` with ``I0`` the
    information at ``beta = 0``.
    """
    gamma = np.asarray(gamma, dtype=int)
    if len(gamma) != view.p or np.any((gamma != 0) & (gamma != 1)):
        raise SelectionError(f"inclusion vector must be 0/1 of length {view.p}")
    return MarginalCache(view, c)(gamma)


def _model_label(columns, gamma) -> str:
    inc = [c for c, g in zip(columns, gamma) if g]
    return " + ".join(inc) if inc else "(null)"


@dataclass
class ModelPosterior:
    """Posterior over inclusion vectors for one cause."""

    columns: tuple[str, ...]
    inclusion: np.ndarray
    models: pd.DataFrame
    trace: np.ndarray | None = None
    method: str = "enumeration"

    def top(self, n: int = 5) -> pd.DataFrame:
        """Most probable models with their posterior probabilities."""
        df = self.models.sort_values(["probability", "model"], ascending=[False, True])
        return df.head(n)[["model", "probability"]].reset_index(drop=True)

    def inclusion_table(self) -> pd.DataFrame:
        return pd.DataFrame({"covariate": list(self.columns), "inclusion": self.inclusion})


def enumerate_models(view: CauseData, c: float = 1.0, cache: MarginalCache | None = None
                     ) -> ModelPosterior:
    """Exact posterior over all ``2^p`` models under a uniform model prior."""
    check_collinearity(view)
    if view.p > 20:
        raise SelectionError("enumeration limited to 20 covariates")
    cache = cache or MarginalCache(view, c)
    gammas = list(itertools.product((0, 1), repeat=view.p))
    lm = np.array([cache(g) for g in gammas])
    prob = np.exp(lm - logsumexp(lm))
    G = np.array(gammas, dtype=float).reshape(len(gammas), view.p)
    models = pd.DataFrame({
        "model": [_model_label(view.columns, g) for g in gammas],
        "gamma": gammas,
        "log_marginal": lm,
        "probability": prob,
    })
    return ModelPosterior(view.columns, prob @ G, models, None, "enumeration")


def bf_gibbs_search(view: CauseData, iterations: int = 1000, burn_in: int = 300,
                    initial_dimension: int = 5, seed: int = 0, c: float = 1.0) -> ModelPosterior:
    """Gibbs sampling over inclusion vectors with a uniform model prior.

    Each sweep visits every covariate and sets its indicator from the exact
    conditional ``expit(log m(gamma with j) - log m(gamma without j))``.
    The inclusion estimate averages those conditionals over the sweeps
    after burn-in.  ``trace`` holds the running average from the first
    sweep, for judging stability.
    """
    if view.p > MAX_SEARCH_COVARIATES:
        raise SelectionError(f"at most {MAX_SEARCH_COVARIATES} covariates can be searched")
    if not 0 <= burn_in < iterations:
        raise SelectionError("need 0 <= burn_in < iterations")
    check_collinearity(view)
    cache = MarginalCache(view, c)
    rng = np.random.default_rng(seed)
    p = view.p
    gamma = np.zeros(p, dtype=int)
    start = rng.choice(p, size=min(initial_dimension, p), replace=False) if p else []
    gamma[start] = 1
    cond = np.zeros((iterations, p))
    visits: dict[tuple, int] = {}
    for it in range(iterations):
        for j in range(p):
            g1 = gamma.copy()
            g1[j] = 1
            g0 = gamma.copy()
            g0[j] = 0
            pj = float(expit(cache(g1) - cache(g0)))
            cond[it, j] = pj
            gamma[j] = 1 if rng.random() < pj else 0
        if it >= burn_in:
            key = tuple(int(g) for g in gamma)
            visits[key] = visits.get(key, 0) + 1
    inclusion = cond[burn_in:].mean(axis=0)
    trace = np.cumsum(cond, axis=0) / np.arange(1, iterations + 1)[:, None]
    keys = sorted(visits)
    lm = np.array([cache(k) for k in keys])
    freq = np.array([visits[k] for k in keys], dtype=float) / (iterations - burn_in)
    models = pd.DataFrame({
        "model": [_model_label(view.columns, k) for k in keys],
        "gamma": keys,
        "log_marginal": lm,
        "frequency": freq,
        "probability": np.exp(lm - logsumexp(lm)),
    })
    return ModelPosterior(view.columns, inclusion, models, trace, "bayes-factor")


def trace_stability(trace: np.ndarray, last: int = 200) -> float:
    """Largest change of any running inclusion estimate over the final ``last`` sweeps."""
    tail = trace[-last:]
    return float(np.max(tail.max(axis=0) - tail.min(axis=0))) if len(tail) else 0.0


@dataclass
class InclusionReport:
    """Spike-and-slab inclusion probabilities per cause."""

    table: pd.DataFrame
    sample: PosteriorSample

    def median_model(self) -> dict[str, list[str]]:
        """Covariates with inclusion probability >= 0.5, per cause."""
        out = {}
        for cause, grp in self.table.groupby("cause", sort=False):
            out[cause] = list(grp.loc[grp["inclusion"] >= 0.5, "covariate"])
        return out

    def inclusion(self, cause: str) -> dict[str, float]:
        grp = self.table[self.table["cause"] == cause]
        return dict(zip(grp["covariate"], grp["inclusion"]))


def spike_slab_fit(spec: ModelSpec, data: Dataset, ss: SpikeSlabConfig | None = None,
                   config: SamplerConfig | None = None, priors: PriorSpec | None = None
                   ) -> InclusionReport:
    """Sample (baseline, beta, gamma, eta) jointly; inclusion = posterior mean of gamma."""
    ss = ss or SpikeSlabConfig()
    if ss.fix_gamma is not None:
        if len(ss.fix_gamma) != spec.K or any(
                len(g) != len(c.covariates) for g, c in zip(ss.fix_gamma, spec.causes)):
            raise SelectionError("fix_gamma must give one 0/1 vector per cause")
    sample = run_chains(spec, data, priors, config, spike_slab=ss)
    rows = []
    for c in spec.causes:
        for v in c.covariates:
            rows.append({"cause": c.label, "covariate": v,
                         "inclusion": float(sample.column(f"{c.label}.incl.{v}").mean())})
    return InclusionReport(pd.DataFrame(rows, columns=["cause", "covariate", "inclusion"]), sample)


def beta_binomial_log_prior(gamma, a: float = 1.0, b: float = 1.0) -> float:
    """Log prior mass of one inclusion vector after integrating the Beta(a, b) rate."""
    gamma = np.asarray(gamma)
    s, p = int(gamma.sum()), len(gamma)
    return float(betaln(a + s, b + p - s) - betaln(a, b))


def merged_inclusion_table(bf: dict[str, ModelPosterior] | None = None,
                           ss: InclusionReport | None = None) -> pd.DataFrame:
    """One row per (cause, covariate), one inclusion column per method."""
    frames = []
    if bf:
        for cause, mp in bf.items():
            frames.append(pd.DataFrame({"cause": cause, "covariate": list(mp.columns),
                                        "bayes-factor": mp.inclusion}))
    left = pd.concat(frames, ignore_index=True) if frames else None
    right = ss.table.rename(columns={"inclusion": "spike-slab"}) if ss is not None else None
    if left is None and right is None:
        raise SelectionError("no selection results to merge")
    if left is None:
        return right
    if right is None:
        return left
    merged = left.merge(right, on=["cause", "covariate"], how="outer")
    order = list(dict.fromkeys([*zip(left["cause"], left["covariate"]),
                                *zip(right["cause"], right["covariate"])]))
    rank = {key: i for i, key in enumerate(order)}
    merged["_rank"] = [rank[key] for key in zip(merged["cause"], merged["covariate"])]
    return merged.sort_values("_rank").drop(columns="_rank").reset_index(drop=True)


__all__ = [
    "CauseData",
    "InclusionReport",
    "MarginalCache",
    "ModelPosterior",
    "SelectionError",
    "SpikeSlabConfig",
    "beta_binomial_log_prior",
    "bf_gibbs_search",
    "cause_view",
    "check_collinearity",
    "enumerate_models",
    "laplace_log_marginal",
    "merged_inclusion_table",
    "spike_slab_fit",
    "trace_stability",
]
