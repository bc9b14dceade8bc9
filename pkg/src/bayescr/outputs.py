"""Posterior summaries, predictive curves for covariate profiles, and the
nonparametric (Aalen-Johansen) cumulative incidence estimate."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import CovariateSchema, DataError, Dataset, _encode_value
from .hazard import ParameterVector, ZeroProbabilityError, cumulative_incidences, transition_probabilities
from .model import ModelSpec, covariate_vectors
from .sampler import PosteriorSample

DEFAULT_GRID_POINTS = 200
HORIZON_FACTOR = 1.1
MAX_EXCLUDED_FRACTION = 0.01


class PredictionError(ValueError):
    pass


def posterior_summary(sample: PosteriorSample, names=None) -> pd.DataFrame:
    """Mean, sd, median and central 95% interval (linear-interpolated percentiles)."""
    names = list(sample.names if names is None else names)
    pooled = sample.pooled()
    if len(pooled) == 0:
        raise ValueError("empty posterior sample")
    rows = []
    for name in names:
        x = pooled[:, sample.names.index(name)]
        lo, med, hi = np.percentile(x, [2.5, 50.0, 97.5])
        # moments about the first draw: exact for constant columns
        dev = x - x[0]
        sd = float(np.std(dev, ddof=1)) if len(x) > 1 else 0.0
        rows.append({"parameter": name, "mean": float(x[0] + np.mean(dev)), "sd": sd,
                     "median": float(med), "lo95": float(lo), "hi95": float(hi)})
    return pd.DataFrame(rows).set_index("parameter")


@dataclass(frozen=True)
class Profile:
    """Covariate values on the natural scale, keyed by schema entry name."""

    name: str
    values: dict = field(default_factory=dict)


def encode_profile(spec: ModelSpec, schema: CovariateSchema, profile: Profile | dict) -> list[np.ndarray]:
    """Per-cause covariate vectors for a profile.

    Continuous values pass through the stored standardization.  Entries the
    model does not use may be omitted.
    """
    values = profile.values if isinstance(profile, Profile) else dict(profile)
    needed = {v for c in spec.causes for v in c.covariates}
    row, missing = [], []
    for e in schema.entries:
        used = any(col in needed for col in e.columns)
        if e.name in values:
            try:
                row.extend(_encode_value(e, values[e.name]))
            except DataError as exc:
                raise PredictionError(str(exc)) from exc
        elif used:
            missing.append(e.name)
        else:
            row.extend([0.0] * len(e.columns))
    if missing:
        raise PredictionError(f"incomplete profile: missing {missing}")
    return covariate_vectors(spec, np.array(row), schema.columns)


@dataclass
class CurveSet:
    """Pointwise posterior mean and 95% band of each transition probability.

    Arrays have shape ``(K + 1, len(grid))``; row 0 is staying alive.
    """

    grid: np.ndarray
    targets: list[str]
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    s0: float
    excluded: int = 0
    draws: np.ndarray | None = None

    def to_frame(self) -> pd.DataFrame:
        parts = []
        for r, target in enumerate(self.targets):
            parts.append(pd.DataFrame({"time": self.grid, "target": target, "mean": self.mean[r],
                                       "lo": self.lo[r], "hi": self.hi[r]}))
        return pd.concat(parts, ignore_index=True)


def default_grid(s0: float, max_time: float, points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    horizon = HORIZON_FACTOR * max_time
    if not horizon > s0:
        raise PredictionError(f"horizon {horizon} does not exceed s0 = {s0}")
    return np.linspace(s0, horizon, points)


def predict_profile(sample: PosteriorSample, xs, grid=None, s0: float = 0.0,
                    max_time: float | None = None, keep_draws: bool = False) -> CurveSet:
    """Transition probabilities from ``s0`` for one profile, summarized over draws.

    ``xs`` holds the per-cause covariate vectors (see :func:`encode_profile`).
    Draws with zero survival at ``s0`` are skipped; more than 1% skipped is an error.
    """
    if grid is None:
        if max_time is None:
            raise PredictionError("need a grid or the maximum observed time")
        grid = default_grid(s0, max_time)
    grid = np.asarray(grid, dtype=float)
    if s0 < 0 or np.any(grid < s0):
        raise PredictionError("need 0 <= s0 <= min(grid)")
    curves, excluded = [], 0
    for theta in sample.parameter_vectors():
        try:
            curves.append(transition_probabilities(theta, xs, s0, grid))
        except ZeroProbabilityError:
            excluded += 1
    total = excluded + len(curves)
    if excluded > MAX_EXCLUDED_FRACTION * total:
        raise PredictionError(f"{excluded} of {total} draws have zero survival at s0 = {s0}")
    arr = np.stack(curves)
    lo, hi = np.percentile(arr, [2.5, 97.5], axis=0)
    targets = ["alive", *sample.spec.labels]
    return CurveSet(grid, targets, arr.mean(axis=0), lo, hi, float(s0), excluded,
                    arr if keep_draws else None)


def marginal_cif(theta: ParameterVector, spec: ModelSpec, data: Dataset, times) -> np.ndarray:
    """Model cumulative incidences averaged over the subjects' covariates; ``(K, len(times))``."""
    times = np.asarray(times, dtype=float)
    designs = spec.designs(data)
    if all(X.shape[1] == 0 for X in designs):
        return cumulative_incidences(theta, None, times)
    out = np.zeros((spec.K, len(times)))
    for i in range(data.n):
        out += cumulative_incidences(theta, [X[i] for X in designs], times)
    return out / data.n


@dataclass
class AalenJohansen:
    """Step functions: all-cause survival and cause-specific incidences at the event times."""

    times: np.ndarray
    survival: np.ndarray
    cif: np.ndarray
    labels: list[str]

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        """(survival, cif) evaluated at times ``t`` (right-continuous steps)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx = np.searchsorted(self.times, t, side="right") - 1
        s = np.where(idx >= 0, self.survival[np.maximum(idx, 0)], 1.0)
        f = np.where(idx >= 0, self.cif[:, np.maximum(idx, 0)], 0.0)
        return s, f

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({"time": self.times, "survival": self.survival})
        for lab, row in zip(self.labels, self.cif):
            df[lab] = row
        return df


def nonparametric_cif(d: Dataset) -> AalenJohansen:
    """Aalen-Johansen estimate; at tied times events precede censorings."""
    if d.n < 1:
        raise ValueError("need at least one subject")
    order = np.argsort(d.time, kind="stable")
    t, c = d.time[order], d.cause[order]
    uniq = np.unique(t[c > 0])
    K = d.K
    surv = np.empty(len(uniq))
    cif = np.zeros((K, len(uniq)))
    S, F = 1.0, np.zeros(K)
    for j, tj in enumerate(uniq):
        at_risk = len(t) - np.searchsorted(t, tj, side="left")
        here = c[t == tj]
        dk = np.bincount(here, minlength=K + 1)[1:]
        F = F + S * dk / at_risk
        S = S * (1.0 - dk.sum() / at_risk)
        surv[j] = S
        cif[:, j] = F
    return AalenJohansen(uniq, surv, cif, list(d.cause_labels))


__all__ = [
    "AalenJohansen",
    "CurveSet",
    "PredictionError",
    "Profile",
    "default_grid",
    "encode_profile",
    "marginal_cif",
    "nonparametric_cif",
    "posterior_summary",
    "predict_profile",
]
