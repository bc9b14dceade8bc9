"""Prior distributions for the cause-specific hazard parameters.

Normal priors are stored by precision (the second argument of ``N(0, 0.001)``
is a precision, i.e. variance 1000).  Gamma priors are shape-rate.
Parameter blocks are a priori independent across causes and between the
baseline and the regression coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hazard import ParameterVector, PiecewiseConstantBaseline, WeibullBaseline
from .model import ModelSpec

LN2 = 0.69315
NEG_INF = -math.inf
_LOG_2PI = math.log(2.0 * math.pi)


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class NormalPrecision:
    mean: float = 0.0
    precision: float = 0.001

    def __post_init__(self):
        if not self.precision > 0:
            raise PriorError(f"precision must be > 0, got {self.precision}")

    @classmethod
    def from_variance(cls, mean: float, variance: float) -> "NormalPrecision":
        return cls(mean, 1.0 / variance)

    @property
    def sd(self) -> float:
        return 1.0 / math.sqrt(self.precision)

    def logpdf(self, x: float) -> float:
        z = x - self.mean
        return 0.5 * (math.log(self.precision) - _LOG_2PI) - 0.5 * self.precision * z * z

    def sample(self, rng) -> float:
        return float(rng.normal(self.mean, self.sd))

    def in_support(self, x: float) -> bool:
        return math.isfinite(x)


@dataclass(frozen=True)
class GammaShapeRate:
    shape: float = 0.01
    rate: float = 0.01

    def __post_init__(self):
        if not (self.shape > 0 and self.rate > 0):
            raise PriorError(f"gamma shape and rate must be > 0, got {self.shape}, {self.rate}")

    def logpdf(self, x: float) -> float:
        if not x > 0:
            return NEG_INF
        a, b = self.shape, self.rate
        return a * math.log(b) - math.lgamma(a) + (a - 1.0) * math.log(x) - b * x

    def sample(self, rng) -> float:
        return float(rng.gamma(self.shape, 1.0 / self.rate))

    def in_support(self, x: float) -> bool:
        return 0 < x < math.inf


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 10.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise PriorError(f"need lo < hi, got {self.lo}, {self.hi}")

    def logpdf(self, x: float) -> float:
        if self.lo < x < self.hi:
            return -math.log(self.hi - self.lo)
        return NEG_INF

    def sample(self, rng) -> float:
        while True:
            x = float(rng.uniform(self.lo, self.hi))
            if self.lo < x < self.hi:
                return x

    def in_support(self, x: float) -> bool:
        return self.lo < x < self.hi


def _interval_widths(knots):
    """Interval widths; the open last interval borrows the width of the one before it."""
    a = np.asarray(knots, dtype=float)
    w = np.diff(a)
    last = w[-1] if len(w) else 1.0
    return np.append(w, last)


@dataclass(frozen=True)
class LazaroIntervalGamma:
    """Level r ~ Gamma(omega0 * eta0 * w_r, omega0 * w_r), w_r the interval width."""

    omega0: float
    eta0: float

    def __post_init__(self):
        if not (self.omega0 > 0 and self.eta0 > 0):
            raise PriorError("omega0 and eta0 must be > 0")

    @classmethod
    def from_median(cls, median_time: float, omega0: float = 0.01) -> "LazaroIntervalGamma":
        return cls(omega0=omega0, eta0=LN2 / median_time)

    def level_priors(self, knots) -> list[GammaShapeRate]:
        return [GammaShapeRate(self.omega0 * self.eta0 * w, self.omega0 * w)
                for w in _interval_widths(knots)]

    def logpdf(self, levels, knots) -> float:
        return sum(g.logpdf(x) for g, x in zip(self.level_priors(knots), levels))

    def sample(self, rng, knots) -> np.ndarray:
        return np.array([_positive_draw(g, rng) for g in self.level_priors(knots)])


@dataclass(frozen=True)
class LazaroAutoregressive:
    """Level 1 ~ ``first``; level r | level r-1 ~ Gamma(eta0, eta0 / level_{r-1})."""

    eta0: float = 0.01
    first: GammaShapeRate = field(default_factory=GammaShapeRate)

    def __post_init__(self):
        if not self.eta0 > 0:
            raise PriorError("eta0 must be > 0")

    def logpdf(self, levels, knots=None) -> float:
        levels = list(levels)
        if any(not x > 0 for x in levels):
            return NEG_INF
        total = self.first.logpdf(levels[0])
        for prev, cur in zip(levels, levels[1:]):
            total += GammaShapeRate(self.eta0, self.eta0 / prev).logpdf(cur)
        return total

    def level_logpdf(self, levels, r: int) -> float:
        """Terms of the chain rule that involve level ``r`` (0-based)."""
        x = levels[r]
        if not x > 0:
            return NEG_INF
        if r == 0:
            out = self.first.logpdf(x)
        else:
            out = GammaShapeRate(self.eta0, self.eta0 / levels[r - 1]).logpdf(x)
        if r + 1 < len(levels):
            out += GammaShapeRate(self.eta0, self.eta0 / x).logpdf(levels[r + 1])
        return out

    def sample(self, rng, knots) -> np.ndarray:
        out = [_positive_draw(self.first, rng)]
        for _ in range(len(knots) - 1):
            out.append(_positive_draw(GammaShapeRate(self.eta0, self.eta0 / out[-1]), rng))
        return np.array(out)


def _positive_draw(prior, rng, tries=1000):
    for _ in range(tries):
        x = prior.sample(rng)
        if prior.in_support(x) and x > 1e-300:
            return x
    raise PriorError(f"could not draw a positive value from {prior}")


LevelPrior = GammaShapeRate | LazaroIntervalGamma | LazaroAutoregressive
CoefPrior = NormalPrecision | Uniform


@dataclass(frozen=True)
class CausePrior:
    beta: CoefPrior = field(default_factory=NormalPrecision)
    weibull_scale: GammaShapeRate = field(default_factory=GammaShapeRate)
    weibull_shape: Uniform = field(default_factory=Uniform)
    levels: LevelPrior = field(default_factory=GammaShapeRate)

    def level_logpdf(self, levels, knots, r: int) -> float:
        """Log prior terms that change when level ``r`` changes."""
        lp = self.levels
        if isinstance(lp, GammaShapeRate):
            return lp.logpdf(levels[r])
        if isinstance(lp, LazaroIntervalGamma):
            return lp.level_priors(knots)[r].logpdf(levels[r])
        return lp.level_logpdf(levels, r)

    def levels_logpdf(self, levels, knots) -> float:
        lp = self.levels
        if isinstance(lp, GammaShapeRate):
            return sum(lp.logpdf(x) for x in levels)
        return lp.logpdf(levels, knots)


@dataclass(frozen=True)
class PriorSpec:
    causes: tuple[CausePrior, ...]

    def __post_init__(self):
        object.__setattr__(self, "causes", tuple(self.causes))

    def with_beta_prior(self, beta: CoefPrior) -> "PriorSpec":
        return PriorSpec(tuple(CausePrior(beta, c.weibull_scale, c.weibull_shape, c.levels)
                               for c in self.causes))


def default_priors(spec: ModelSpec) -> PriorSpec:
    """N(0, precision 0.001) coefficients, Ga(0.01, 0.01) scales and levels, U(0, 10) shapes."""
    return PriorSpec(tuple(CausePrior() for _ in spec.causes))


def log_prior_density(p: PriorSpec, theta: ParameterVector) -> float:
    """Sum of block log densities; ``-inf`` outside the support."""
    total = 0.0
    for cp, cm in zip(p.causes, theta.causes):
        b = cm.baseline
        if isinstance(b, WeibullBaseline):
            total += cp.weibull_shape.logpdf(b.shape) + cp.weibull_scale.logpdf(b.scale)
        elif isinstance(b, PiecewiseConstantBaseline):
            total += cp.levels_logpdf(b.levels, b.knots)
        for x in cm.beta:
            total += cp.beta.logpdf(float(x))
        if total == NEG_INF:
            return NEG_INF
    return total


def beta_prior_from_config(cfg: dict) -> CoefPrior:
    """Coefficient prior from a config block.

    ``{"family": "normal", "mean": 0, "precision": 0.001}`` or with
    ``"parameterization": "variance"`` and ``"variance"``; or
    ``{"family": "uniform", "lo": -10, "hi": 10}``.
    """
    family = cfg.get("family", "normal")
    if family == "uniform":
        return Uniform(float(cfg.get("lo", -10.0)), float(cfg.get("hi", 10.0)))
    if family != "normal":
        raise PriorError(f"unknown coefficient prior family {family!r}")
    mean = float(cfg.get("mean", 0.0))
    param = cfg.get("parameterization", "precision")
    if param == "precision":
        return NormalPrecision(mean, float(cfg.get("precision", 0.001)))
    if param == "variance":
        return NormalPrecision.from_variance(mean, float(cfg.get("variance", 1000.0)))
    raise PriorError(f"unknown normal parameterization {param!r}")


def levels_prior_from_config(cfg: dict) -> LevelPrior:
    """Piecewise level prior: ``gamma``, ``lazaro_interval`` or ``lazaro_ar``."""
    family = cfg.get("family", "gamma")
    if family == "gamma":
        return GammaShapeRate(float(cfg.get("shape", 0.01)), float(cfg.get("rate", 0.01)))
    if family == "lazaro_interval":
        omega0 = float(cfg.get("omega0", 0.01))
        if "eta0" in cfg:
            return LazaroIntervalGamma(omega0, float(cfg["eta0"]))
        return LazaroIntervalGamma.from_median(float(cfg["median_time"]), omega0)
    if family == "lazaro_ar":
        first = cfg.get("first", {})
        return LazaroAutoregressive(
            float(cfg.get("eta0", 0.01)),
            GammaShapeRate(float(first.get("shape", 0.01)), float(first.get("rate", 0.01))),
        )
    raise PriorError(f"unknown level prior family {family!r}")


def priors_from_config(spec: ModelSpec, cfg: dict | None) -> PriorSpec:
    """Build a :class:`PriorSpec`; ``cfg`` may hold defaults and per-cause overrides.

    Recognized keys: ``beta``, ``weibull_scale``, ``weibull_shape``,
    ``levels`` and ``per_cause: {label: {...same keys...}}``.
    """
    cfg = dict(cfg or {})
    per_cause = cfg.pop("per_cause", {}) or {}
    out = []
    for c in spec.causes:
        merged = {**cfg, **per_cause.get(c.label, {})}
        cp = CausePrior()
        if "beta" in merged:
            cp = CausePrior(beta_prior_from_config(merged["beta"]), cp.weibull_scale,
                            cp.weibull_shape, cp.levels)
        if "weibull_scale" in merged:
            ws = merged["weibull_scale"]
            cp = CausePrior(cp.beta, GammaShapeRate(float(ws.get("shape", 0.01)),
                                                     float(ws.get("rate", 0.01))),
                            cp.weibull_shape, cp.levels)
        if "weibull_shape" in merged:
            wa = merged["weibull_shape"]
            cp = CausePrior(cp.beta, cp.weibull_scale,
                            Uniform(float(wa.get("lo", 0.0)), float(wa.get("hi", 10.0))), cp.levels)
        if "levels" in merged:
            cp = CausePrior(cp.beta, cp.weibull_scale, cp.weibull_shape,
                            levels_prior_from_config(merged["levels"]))
        out.append(cp)
    return PriorSpec(tuple(out))
