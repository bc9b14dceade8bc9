"""Synthetic competing-risks data and brute-force oracles.

Event times are drawn by inverting the total cumulative hazard at a unit
exponential variate; the cause is then drawn with probabilities
proportional to the cause-specific hazards at the event time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .data import CovariateEntry, CovariateSchema, Dataset, schema_document, to_csv
from .hazard import ParameterVector, PiecewiseConstantBaseline, WeibullBaseline
from .model import ModelSpec


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class TruthSpec:
    """Data-generating model.

    Covariates are ``n_normal`` independent standard normal columns named
    ``x1, x2, ...`` followed by Bernoulli columns ``b1, b2, ...`` with the
    given success probabilities.  Censoring is the earlier of an
    administrative time and a Uniform(0, ``uniform_censor_max``) time,
    either of which may be absent.
    """

    spec: ModelSpec
    theta: ParameterVector
    n_normal: int = 0
    bernoulli_probs: tuple[float, ...] = ()
    admin_censor: float | None = None
    uniform_censor_max: float | None = None
    cause_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "bernoulli_probs", tuple(float(p) for p in self.bernoulli_probs))
        if self.admin_censor is not None and not self.admin_censor > 0:
            raise SimulationError("administrative censoring time must be > 0")
        if self.uniform_censor_max is not None and not self.uniform_censor_max > 0:
            raise SimulationError("uniform censoring bound must be > 0")
        if any(not 0 <= p <= 1 for p in self.bernoulli_probs):
            raise SimulationError("Bernoulli probabilities must lie in [0, 1]")
        self.spec.flatten(self.theta)
        self.spec.column_indices(self.columns)

    @property
    def columns(self) -> list[str]:
        return ([f"x{j}" for j in range(1, self.n_normal + 1)]
                + [f"b{j}" for j in range(1, len(self.bernoulli_probs) + 1)])

    @property
    def schema(self) -> CovariateSchema:
        entries = [CovariateEntry(c, "continuous") for c in self.columns[:self.n_normal]]
        entries += [CovariateEntry(c, "binary") for c in self.columns[self.n_normal:]]
        return CovariateSchema(tuple(entries))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.cause_labels) if self.cause_labels else tuple(self.spec.labels)


def _multipliers(ts: TruthSpec, X):
    idx = ts.spec.column_indices(ts.columns)
    return np.array([np.exp(X[:, ix] @ cm.beta) if ix else np.ones(len(X))
                     for ix, cm in zip(idx, ts.theta.causes)])


def _total_cumulative(baselines, mult, t):
    return sum(m * b.cumulative(t) for b, m in zip(baselines, mult))


def _invert_total(baselines, mult, target):
    """Times T with total cumulative hazard H(T) = target (per subject)."""
    n = len(target)
    if all(isinstance(b, WeibullBaseline) for b in baselines) and \
            len({b.shape for b in baselines}) == 1:
        alpha = baselines[0].shape
        rate = sum(b.scale * m for b, m in zip(baselines, mult))
        return (target / rate) ** (1.0 / alpha)
    if all(isinstance(b, PiecewiseConstantBaseline) for b in baselines):
        grid = np.unique(np.concatenate([b.knots for b in baselines]))
        # H is linear between breakpoints: cumulative values at the grid and
        # the total hazard level on [grid_j, grid_{j+1}) (last one open)
        Hg = np.zeros((n, len(grid)))
        levels = np.zeros((n, len(grid)))
        for b, m in zip(baselines, mult):
            Hg += m[:, None] * b.cumulative(grid)[None, :]
            r = np.clip(np.searchsorted(b.knots, grid, "right") - 1, 0, len(b.levels) - 1)
            levels += m[:, None] * np.asarray(b.levels)[r][None, :]
        j = (Hg <= target[:, None]).sum(axis=1) - 1
        rows = np.arange(n)
        return grid[j] + (target - Hg[rows, j]) / levels[rows, j]
    lo = np.zeros(n)
    hi = np.ones(n)
    for _ in range(200):
        short = _total_cumulative(baselines, mult, hi) < target
        if not short.any():
            break
        hi[short] *= 2.0
    else:
        raise SimulationError("total cumulative hazard does not reach the target; improper hazard")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = _total_cumulative(baselines, mult, mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.max(hi - lo) < 1e-10:
            break
    return 0.5 * (lo + hi)


def simulate_dataset(ts: TruthSpec, n: int, seed: int) -> Dataset:
    """Draw ``n`` subjects from ``ts``; deterministic for a given seed."""
    if n < 1:
        raise SimulationError("n must be >= 1")
    rng = np.random.default_rng(seed)
    cols = [rng.standard_normal(n) for _ in range(ts.n_normal)]
    cols += [(rng.random(n) < p).astype(float) for p in ts.bernoulli_probs]
    X = np.column_stack(cols) if cols else np.zeros((n, 0))
    mult = _multipliers(ts, X)
    baselines = [cm.baseline for cm in ts.theta.causes]
    target = rng.exponential(size=n)
    T = _invert_total(baselines, mult, target)
    h = np.array([m * b.hazard(T) for b, m in zip(baselines, mult)])
    cum = np.cumsum(h / h.sum(axis=0), axis=0)
    u = rng.random(n)
    cause = 1 + np.sum(u[None, :] > cum[:-1], axis=0)
    C = np.full(n, np.inf)
    if ts.admin_censor is not None:
        C = np.minimum(C, ts.admin_censor)
    if ts.uniform_censor_max is not None:
        C = np.minimum(C, rng.uniform(0.0, ts.uniform_censor_max, size=n))
    censored = C < T
    time = np.where(censored, C, T)
    cause = np.where(censored, 0, cause)
    # guard against a zero uniform draw
    time = np.maximum(time, np.finfo(float).tiny)
    return Dataset(ids=tuple(str(i) for i in range(1, n + 1)), time=time, cause=cause, X=X,
                   schema=ts.schema, cause_labels=ts.labels)


def brute_force_event_probs(ts: TruthSpec, x) -> np.ndarray:
    """``P(cause = k | x)`` by adaptive quadrature of the subdensities over (0, inf).

    ``x`` is a full covariate row in ``ts.columns`` order.
    """
    row = np.asarray(x, dtype=float).reshape(1, -1)
    mult = _multipliers(ts, row)[:, 0]
    baselines = [cm.baseline for cm in ts.theta.causes]
    breaks = sorted({float(a) for b in baselines if isinstance(b, PiecewiseConstantBaseline)
                     for a in b.knots[1:]})
    out = []
    for k, (b, m) in enumerate(zip(baselines, mult)):
        def f(u):
            if u <= 0:
                return 0.0
            H = sum(mm * bb.cumulative(np.array([u]))[0] for bb, mm in zip(baselines, mult))
            return m * float(b.hazard(np.array([u]))[0]) * math.exp(-H)

        edges = [0.0, *breaks]
        total = 0.0
        for lo, hi in zip(edges, edges[1:]):
            val, err = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
            total += val
        val, err = integrate.quad(f, edges[-1], math.inf, epsabs=1e-12, epsrel=1e-10, limit=400)
        if not math.isfinite(val) or err > 1e-8:
            raise SimulationError(f"tail integral for cause {k + 1} did not converge (err={err:g})")
        out.append(total + val)
    return np.array(out)


def write_dataset(d: Dataset, csv_path: str, schema_path: str):
    """Write the CSV and sidecar schema read back by ``data.read_dataset``."""
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(to_csv(d))
    with open(schema_path, "w", encoding="utf-8") as fh:
        json.dump(schema_document(d), fh, indent=2, sort_keys=True)
        fh.write("\n")


def truth_from_config(cfg: dict) -> TruthSpec:
    """Build a :class:`TruthSpec` from a config block with ``model`` and ``truth`` values."""
    spec = ModelSpec.from_dict(cfg["model"])
    truth = cfg["truth"]
    values = []
    for c in spec.causes:
        t = truth[c.label]
        if c.baseline == "weibull":
            values.extend([float(t["alpha"]), float(t["lambda"])])
        else:
            values.extend(float(v) for v in t["levels"])
        betas = t.get("beta", {})
        values.extend(float(betas.get(v, 0.0)) for v in c.covariates)
    cens = cfg.get("censoring", {})
    return TruthSpec(
        spec=spec,
        theta=spec.unflatten(values),
        n_normal=int(cfg.get("n_normal", 0)),
        bernoulli_probs=tuple(cfg.get("bernoulli_probs", ())),
        admin_censor=cens.get("administrative"),
        uniform_censor_max=cens.get("uniform_max"),
    )


__all__ = [
    "SimulationError",
    "TruthSpec",
    "brute_force_event_probs",
    "simulate_dataset",
    "truth_from_config",
    "write_dataset",
]
