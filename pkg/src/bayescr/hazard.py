"""Baseline hazards and the survival quantities derived from them.

All functions accept scalar or array times.  Causes are numbered from 1,
matching the cause codes in the data (0 is right censoring).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# log S below this is reported as S = 0
LOG_UNDERFLOW = -745.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)
_N_GEOMETRIC = 64
_SEGMENT_TOL = 1e-10
_MAX_BISECTIONS = 40


class HazardError(ValueError):
    """Invalid argument to a hazard computation."""


class ZeroProbabilityError(HazardError):
    """Conditioning on an event whose probability underflows to zero."""


@dataclass(frozen=True)
class WeibullBaseline:
    """Weibull baseline ``h0(t) = scale * shape * t**(shape - 1)``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and np.isfinite(self.shape)):
            raise HazardError(f"Weibull shape must be positive, got {self.shape}")
        if not (self.scale > 0 and np.isfinite(self.scale)):
            raise HazardError(f"Weibull scale must be positive, got {self.scale}")

    @property
    def params(self) -> tuple[float, ...]:
        return (self.shape, self.scale)

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        return self.scale * self.shape * np.power(t, self.shape - 1.0)

    def log_hazard(self, t):
        t = np.asarray(t, dtype=float)
        return np.log(self.scale) + np.log(self.shape) + (self.shape - 1.0) * np.log(t)

    def cumulative(self, t):
        t = np.asarray(t, dtype=float)
        return self.scale * np.power(t, self.shape)


@dataclass(frozen=True)
class PiecewiseConstantBaseline:
    """Piecewise-constant baseline on ``(a_{r-1}, a_r]`` intervals.

    ``knots`` holds ``0 = a_0 < a_1 < ... < a_{R-1}``; the last interval is
    open to infinity, so there is one level per knot.
    """

    knots: tuple[float, ...]
    levels: tuple[float, ...]

    def __post_init__(self):
        knots = tuple(float(a) for a in self.knots)
        levels = tuple(float(g) for g in self.levels)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "levels", levels)
        if not knots or knots[0] != 0.0:
            raise HazardError("piecewise knots must start at 0")
        if any(b <= a for a, b in zip(knots, knots[1:])):
            raise HazardError(f"piecewise knots must be strictly increasing: {knots}")
        if len(levels) != len(knots):
            raise HazardError(
                f"need one level per interval: {len(knots)} intervals, {len(levels)} levels"
            )
        if not all(g > 0 and np.isfinite(g) for g in levels):
            raise HazardError(f"piecewise levels must be positive: {levels}")

    @property
    def params(self) -> tuple[float, ...]:
        return self.levels

    @property
    def n_intervals(self) -> int:
        return len(self.knots)

    def interval_index(self, t):
        """0-based index r with t in (a_r, a_{r+1}]; t = 0 maps to the first interval."""
        idx = np.searchsorted(np.asarray(self.knots), np.asarray(t, dtype=float), side="left") - 1
        return np.maximum(idx, 0)

    def hazard(self, t):
        return np.asarray(self.levels)[self.interval_index(t)]

    def log_hazard(self, t):
        return np.log(self.hazard(t))

    def exposures(self, t):
        """Time spent in each interval up to ``t``; shape ``t.shape + (R,)``."""
        return interval_exposures(self.knots, t)

    def cumulative(self, t):
        return self.exposures(t) @ np.asarray(self.levels)


def interval_exposures(knots: Sequence[float], t):
    """Overlap of ``[0, t]`` with each interval of a piecewise partition."""
    a = np.asarray(knots, dtype=float)
    widths = np.append(np.diff(a), np.inf)
    t = np.asarray(t, dtype=float)
    return np.clip(t[..., None] - a, 0.0, widths)


Baseline = WeibullBaseline | PiecewiseConstantBaseline


@dataclass(frozen=True)
class CauseModel:
    """Parameters of one cause-specific hazard: baseline and coefficients."""

    baseline: Baseline
    beta: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))

    def linear_predictor(self, x) -> float:
        x = _as_covariates(x, len(self.beta))
        return float(x @ self.beta) if len(self.beta) else 0.0


@dataclass(frozen=True)
class ParameterVector:
    """Parameters of all K cause-specific hazards."""

    causes: tuple[CauseModel, ...]

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))
        if len(self.causes) < 1:
            raise HazardError("need at least one cause")

    @property
    def K(self) -> int:
        return len(self.causes)

    def __getitem__(self, k: int) -> CauseModel:
        """Cause model ``k`` (1-based)."""
        return self.causes[_check_cause(k, self.K) - 1]


def _as_covariates(x, p):
    x = np.zeros(0) if x is None else np.asarray(x, dtype=float).reshape(-1)
    if len(x) != p:
        raise HazardError(f"covariate vector has length {len(x)}, expected {p}")
    return x


def _check_cause(k, K):
    if not (isinstance(k, (int, np.integer)) and 1 <= k <= K):
        raise HazardError(f"cause {k} out of range 1..{K}")
    return int(k)


def _check_times(t, strict):
    arr = np.asarray(t, dtype=float)
    bad = arr <= 0 if strict else arr < 0
    if np.any(bad) or np.any(np.isnan(arr)):
        raise HazardError(f"time must be {'> 0' if strict else '>= 0'}, got {t}")
    return arr


def _maybe_scalar(value, t):
    return float(value) if np.ndim(t) == 0 else value


def baseline_hazard(b: Baseline, t):
    arr = _check_times(t, strict=True)
    return _maybe_scalar(b.hazard(arr), t)


def cumulative_baseline_hazard(b: Baseline, t):
    arr = _check_times(t, strict=False)
    return _maybe_scalar(b.cumulative(arr), t)


def cause_specific_hazard(cm: CauseModel, x, t):
    """``h0(t) * exp(x'beta)``."""
    arr = _check_times(t, strict=True)
    return _maybe_scalar(cm.baseline.hazard(arr) * np.exp(cm.linear_predictor(x)), t)


def _multipliers(theta: ParameterVector, xs):
    if xs is None:
        xs = [None] * theta.K
    if len(xs) != theta.K:
        raise HazardError(f"need {theta.K} covariate vectors, got {len(xs)}")
    return np.array([np.exp(cm.linear_predictor(x)) for cm, x in zip(theta.causes, xs)])


def _log_survival(theta, mult, t):
    total = np.zeros(np.shape(t))
    for cm, m in zip(theta.causes, mult):
        total = total + m * cm.baseline.cumulative(t)
    return -total


def log_survival(theta: ParameterVector, xs, t):
    """``log S(t) = -sum_k H_k(t | x_k)``."""
    arr = _check_times(t, strict=False)
    return _maybe_scalar(_log_survival(theta, _multipliers(theta, xs), arr), t)


def overall_survival(theta: ParameterVector, xs, t):
    """Probability of being free of all K events at ``t``.

    Values with ``log S < -745`` are returned as exactly 0; use
    :func:`survival_underflows` to flag them.
    """
    ls = np.asarray(log_survival(theta, xs, t))
    out = np.where(ls < LOG_UNDERFLOW, 0.0, np.exp(np.maximum(ls, LOG_UNDERFLOW)))
    return _maybe_scalar(out, t)


def survival_underflows(theta: ParameterVector, xs, t):
    return np.asarray(log_survival(theta, xs, t)) < LOG_UNDERFLOW


def subdensity(theta: ParameterVector, xs, k: int, t):
    """``f_k(t) = h_k(t) S(t)``."""
    k = _check_cause(k, theta.K)
    arr = _check_times(t, strict=True)
    mult = _multipliers(theta, xs)
    cm = theta.causes[k - 1]
    log_f = cm.baseline.log_hazard(arr) + np.log(mult[k - 1]) + _log_survival(theta, mult, arr)
    return _maybe_scalar(np.exp(log_f), t)


def _gl(func, lo, hi):
    """16-node Gauss-Legendre on each [lo_i, hi_i]; func maps (m, 16) -> (K, m, 16)."""
    half = 0.5 * (hi - lo)
    nodes = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES
    return func(nodes) @ _GL_WEIGHTS * half


def _adaptive_segments(func, lo, hi, n_out):
    """Integrals of func over each segment, bisecting until halves agree."""
    result = np.zeros((n_out, len(lo)))
    owner = np.arange(len(lo))
    whole = _gl(func, lo, hi)
    for _ in range(_MAX_BISECTIONS):
        if len(lo) == 0:
            return result
        mid = 0.5 * (lo + hi)
        left = _gl(func, lo, mid)
        right = _gl(func, mid, hi)
        halves = left + right
        done = np.max(np.abs(halves - whole), axis=0) < _SEGMENT_TOL
        np.add.at(result.T, owner[done], halves[:, done].T)
        keep = ~done
        lo, mid, hi, owner = lo[keep], mid[keep], hi[keep], owner[keep]
        whole = np.concatenate([left[:, keep], right[:, keep]], axis=1)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
        owner = np.concatenate([owner, owner])
    raise HazardError("cumulative incidence quadrature did not converge")


def cumulative_incidences(theta: ParameterVector, xs, times, start: float = 0.0):
    """All K cumulative incidence functions at ``times``; shape ``(K, len(times))``.

    Integrates ``h_k(u) S(u)`` segment by segment.  Segments where every
    hazard is constant are done in closed form; otherwise 16-node
    Gauss-Legendre in ``log u`` (64 geometric subsegments when a Weibull
    cause is present) with bisection refinement.

    With ``start > 0`` the integral runs from ``start`` and survival is
    taken relative to ``S(start)``, giving ``(F_k(t) - F_k(s)) / S(s)``
    without the cancellation of the difference.
    """
    times = _check_times(np.atleast_1d(times), strict=False)
    if np.any(times < start):
        raise HazardError("need start <= t")
    K = theta.K
    mult = _multipliers(theta, xs)
    out = np.zeros((K, len(times)))
    tmax = float(times.max()) if len(times) else start
    if tmax <= start:
        return out
    ls0 = float(_log_survival(theta, mult, np.asarray(start))) if start > 0 else 0.0

    baselines = [cm.baseline for cm in theta.causes]
    has_weibull = any(isinstance(b, WeibullBaseline) for b in baselines)
    points = [times[times > start]]
    for b in baselines:
        if isinstance(b, PiecewiseConstantBaseline):
            knots = np.asarray(b.knots)
            points.append(knots[(knots > start) & (knots < tmax)])

    u_min = start
    if has_weibull and start == 0.0:
        # below u_min the total cumulative hazard is < 1e-12, so F_k(u_min) ~ H_k(u_min)
        eps = 1e-12 / K
        cands = []
        for b, m in zip(baselines, mult):
            if isinstance(b, WeibullBaseline):
                cands.append((eps / (b.scale * m)) ** (1.0 / b.shape))
            else:
                cands.append(eps / (b.levels[0] * m))
                if len(b.knots) > 1:
                    cands.append(b.knots[1])
        u_min = min(min(cands), tmax)
    if has_weibull:
        points.append(np.geomspace(u_min, tmax, _N_GEOMETRIC + 1))

    grid = np.unique(np.concatenate([[start], *points]))
    lo, hi = grid[:-1], grid[1:]
    seg = np.zeros((K, len(lo)))

    if has_weibull:
        first = lo == 0.0
        seg[:, first] = (mult[:, None] * np.array([b.cumulative(hi[first]) for b in baselines]))
        quad = ~first
        if np.any(quad):
            def integrand(w):
                u = np.exp(w)
                h = np.array([m * b.hazard(u) for b, m in zip(baselines, mult)])
                return h * np.exp(_log_survival(theta, mult, u) - ls0) * u
            seg[:, quad] = _adaptive_segments(integrand, np.log(lo[quad]), np.log(hi[quad]), K)
    else:
        mid = 0.5 * (lo + hi)
        h = np.array([m * b.hazard(mid) for b, m in zip(baselines, mult)])
        htot = h.sum(axis=0)
        s_lo = np.exp(_log_survival(theta, mult, lo) - ls0)
        seg = h / htot * s_lo * -np.expm1(-htot * (hi - lo))

    cum = np.concatenate([np.zeros((K, 1)), np.cumsum(seg, axis=1)], axis=1)
    out[:] = cum[:, np.searchsorted(grid, times)]
    return out


def cumulative_incidence(theta: ParameterVector, xs, k: int, t):
    """``F_k(t) = P(T <= t, cause = k)``."""
    k = _check_cause(k, theta.K)
    vals = cumulative_incidences(theta, xs, np.atleast_1d(np.asarray(t, dtype=float)))[k - 1]
    return _maybe_scalar(vals if np.ndim(t) else vals[0], t)


def transition_probabilities(theta: ParameterVector, xs, s: float, times):
    """Transition probabilities from the initial state occupied at ``s``.

    Returns an array of shape ``(K + 1, len(times))``: row 0 is staying
    alive, row k is moving to death from cause k.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if s < 0:
        raise HazardError(f"s must be >= 0, got {s}")
    if np.any(times < s):
        raise HazardError("need s <= t")
    mult = _multipliers(theta, xs)
    ls_s = float(_log_survival(theta, mult, np.asarray(s)))
    if ls_s < LOG_UNDERFLOW:
        raise ZeroProbabilityError("conditioning event has zero probability")
    ls_t = _log_survival(theta, mult, times)
    out = np.empty((theta.K + 1, len(times)))
    out[0] = np.exp(ls_t - ls_s)
    out[1:] = cumulative_incidences(theta, xs, times, start=float(s))
    return out


def transition_probability(theta: ParameterVector, xs, s: float, t: float, target="alive"):
    """``p_00(s, t)`` for ``target='alive'`` or ``p_0k(s, t)`` for integer ``k``."""
    if s > t:
        raise HazardError(f"need s <= t, got s={s}, t={t}")
    row = 0 if target == "alive" else _check_cause(target, theta.K)
    return float(transition_probabilities(theta, xs, s, [t])[row, 0])
