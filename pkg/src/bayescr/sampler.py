"""Adaptive Metropolis-within-Gibbs posterior simulation.

Every scalar parameter is its own block.  Positive parameters (Weibull
scale, piecewise levels) move by a random walk on the log scale, Weibull
shapes by a random walk on the logit of their uniform prior's range, and
coefficients by a plain random walk.  Step sizes adapt toward the target
acceptance rate during burn-in only and are frozen afterwards, so the
retained draws come from a fixed Markov kernel.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from .data import Dataset
from .hazard import CauseModel, ParameterVector
from .likelihood import CauseBlock
from .model import ModelSpec, ModelSpecError
from .priors import (
    GammaShapeRate,
    PriorSpec,
    Uniform,
    _positive_draw,
    default_priors,
    log_prior_density,
)

RATE_FLOOR = 1e-6


class SamplerError(RuntimeError):
    pass


class SamplerConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 3
    iterations: int = 100_000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    adaptation_window: int = 50
    target_acceptance: float = 0.44
    init: str = "null-start"
    workers: int = 1

    def __post_init__(self):
        problems = []
        if self.chains < 1:
            problems.append("chains: must be >= 1")
        if self.thin < 1:
            problems.append("thin: must be >= 1")
        if self.burn_in < 0:
            problems.append("burn_in: must be >= 0")
        if self.burn_in >= self.iterations:
            problems.append("burn_in: must be < iterations")
        if self.adaptation_window < 1:
            problems.append("adaptation_window: must be >= 1")
        if not 0 < self.target_acceptance < 1:
            problems.append("target_acceptance: must be in (0, 1)")
        if self.seed < 0:
            problems.append("seed: must be a nonnegative integer")
        if self.init not in ("null-start", "prior-draw"):
            problems.append("init: must be 'null-start' or 'prior-draw'")
        if problems:
            raise SamplerConfigError(problems)

    @property
    def retained(self) -> int:
        """Retained draws per chain."""
        return (self.iterations - self.burn_in) // self.thin

    def to_dict(self) -> dict:
        return asdict(self)


def initialize(spec: ModelSpec, data: Dataset, strategy: str = "null-start", rng=None,
               priors: PriorSpec | None = None, theta: ParameterVector | None = None
               ) -> ParameterVector:
    """Starting values for a chain.

    ``null-start``: zero coefficients, Weibull shape 1 with the crude
    exponential rate, piecewise levels at per-interval occurrence/exposure.
    ``prior-draw``: independent prior draws kept inside the support.
    ``user``: validate and return ``theta``.
    """
    priors = priors or default_priors(spec)
    if strategy == "user":
        if theta is None:
            raise SamplerError("user initialization needs a parameter vector")
        spec.flatten(theta)
        if not math.isfinite(log_prior_density(priors, theta)):
            raise SamplerError("user initial values violate the prior support")
        return theta
    causes = []
    if strategy == "null-start":
        total_time = float(data.time.sum())
        for k, c in enumerate(spec.causes, start=1):
            events = int(np.sum(data.cause == k))
            rate = events / total_time if total_time > 0 else 0.0
            if rate <= 0:
                warnings.warn(f"cause {c.label!r} has no events; initial rate floored at {RATE_FLOOR}")
                rate = RATE_FLOOR
            if c.baseline == "weibull":
                base = [1.0, rate]
            else:
                block = CauseBlock(data.time, data.cause, np.zeros((data.n, 0)), k, "piecewise", c.knots)
                expo = block.Ecols.sum(axis=1)
                base = []
                for d_r, e_r in zip(block.d, expo):
                    if e_r <= 0:
                        base.append(rate)
                    else:
                        base.append(max(d_r / e_r, RATE_FLOOR))
            causes.append(CauseModel(c.make_baseline(base), np.zeros(len(c.covariates))))
        return ParameterVector(tuple(causes))
    if strategy == "prior-draw":
        rng = rng if rng is not None else np.random.default_rng()
        for c, cp in zip(spec.causes, priors.causes):
            if c.baseline == "weibull":
                base = [cp.weibull_shape.sample(rng), _positive_draw(cp.weibull_scale, rng)]
            elif isinstance(cp.levels, GammaShapeRate):
                base = [_positive_draw(cp.levels, rng) for _ in c.knots]
            else:
                base = list(cp.levels.sample(rng, c.knots))
            beta = [cp.beta.sample(rng) for _ in c.covariates]
            causes.append(CauseModel(c.make_baseline(base), np.array(beta)))
        return ParameterVector(tuple(causes))
    raise SamplerError(f"unknown initialization strategy {strategy!r}")


def _logit(p):
    return math.log(p) - math.log1p(-p)


def _expit(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass
class ChainState:
    """Everything needed to continue a chain exactly."""

    base: list
    beta: list
    gamma: list | None
    incl_prob: list | None
    base_log_scale: list
    beta_log_scale: list
    rng_state: dict
    iteration: int
    adapt_round: int


class Chain:
    """One Markov chain over the parameters of a :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec, data: Dataset, priors: PriorSpec, config: SamplerConfig,
                 theta0: ParameterVector, rng, spike_slab=None):
        self.spec = spec
        self.priors = priors
        self.config = config
        self.rng = rng
        self.ss = spike_slab
        designs = spec.designs(data)
        self.blocks = [CauseBlock(data.time, data.cause, X, k, c.baseline, c.knots)
                       for k, (c, X) in enumerate(zip(spec.causes, designs), start=1)]
        self.base = [np.array(cm.baseline.params, dtype=float) for cm in theta0.causes]
        self.beta = [np.array(cm.beta, dtype=float) for cm in theta0.causes]
        if spike_slab is not None:
            fixed = spike_slab.fix_gamma
            self.gamma = [np.ones(len(c.covariates), dtype=int) if fixed is None
                          else np.asarray(fixed[k], dtype=int).copy()
                          for k, c in enumerate(spec.causes)]
            self.incl_prob = [0.5 for _ in spec.causes]
        else:
            self.gamma = None
            self.incl_prob = None
        self.iteration = 0
        self.adapt_round = 0
        self._refresh()
        for k, blk in enumerate(self.blocks):
            if not math.isfinite(blk.ll + self._full_log_prior(k)):
                raise SamplerError(f"nonfinite log-posterior at initialization (cause "
                                   f"{spec.causes[k].label!r})")
        self.base_log_scale = [np.log(self._initial_scales(k, "base")) for k in range(spec.K)]
        self.beta_log_scale = [np.log(self._initial_scales(k, "beta")) for k in range(spec.K)]
        self._reset_counters()
        self.total_acc = {n: 0 for n in self.block_names()}
        self.total_prop = {n: 0 for n in self.block_names()}

    # -- bookkeeping ---------------------------------------------------------

    def block_names(self):
        names = []
        for c in self.spec.causes:
            names.extend(c.param_names())
        return names

    def _reset_counters(self):
        self.win_acc = [[np.zeros(len(b)), np.zeros(len(s))]
                        for b, s in zip(self.base, self.beta)]
        self.win_prop = [[np.zeros(len(b)), np.zeros(len(s))]
                         for b, s in zip(self.base, self.beta)]

    def _effective_beta(self, k):
        if self.gamma is None:
            return self.beta[k]
        return self.beta[k] * self.gamma[k]

    def _refresh(self):
        for k, blk in enumerate(self.blocks):
            blk.set_state(self.base[k], self._effective_beta(k))

    def _beta_prior(self, k):
        if self.ss is not None:
            return self.ss.slab
        return self.priors.causes[k].beta

    def _full_log_prior(self, k):
        cp = self.priors.causes[k]
        c = self.spec.causes[k]
        base = self.base[k]
        if c.baseline == "weibull":
            lp = cp.weibull_shape.logpdf(base[0]) + cp.weibull_scale.logpdf(base[1])
        else:
            lp = cp.levels_logpdf(base, c.knots)
        bp = self._beta_prior(k)
        return lp + sum(bp.logpdf(float(b)) for b in self.beta[k])

    # -- transformed coordinates for the baseline parameters -------------------

    def _to_z(self, k, r, value):
        c = self.spec.causes[k]
        if c.baseline == "weibull" and r == 0:
            u = self.priors.causes[k].weibull_shape
            return _logit((value - u.lo) / (u.hi - u.lo))
        return math.log(value)

    def _from_z(self, k, r, z):
        c = self.spec.causes[k]
        if c.baseline == "weibull" and r == 0:
            u = self.priors.causes[k].weibull_shape
            return u.lo + (u.hi - u.lo) * _expit(z)
        return math.exp(z)

    def _log_jac(self, k, r, value):
        c = self.spec.causes[k]
        if c.baseline == "weibull" and r == 0:
            u = self.priors.causes[k].weibull_shape
            if not u.lo < value < u.hi:
                return -math.inf
            return math.log(value - u.lo) + math.log(u.hi - value)
        return math.log(value)

    def _base_log_prior(self, k, r, base):
        cp = self.priors.causes[k]
        c = self.spec.causes[k]
        if c.baseline == "weibull":
            return cp.weibull_shape.logpdf(base[0]) if r == 0 else cp.weibull_scale.logpdf(base[1])
        return cp.level_logpdf(base, c.knots, r)

    def _initial_scales(self, k, which):
        """Random-walk steps from the conditional curvature at the start point."""
        blk = self.blocks[k]
        base, beta = self.base[k], self._effective_beta(k)
        n = len(base) if which == "base" else len(beta)
        out = np.empty(n)
        for r in range(n):
            if which == "base":
                z0 = self._to_z(k, r, base[r])

                def f(z):
                    b = base.copy()
                    b[r] = self._from_z(k, r, z)
                    if not b[r] > 0:
                        return -math.inf
                    return (blk.loglik(b, beta) + self._base_log_prior(k, r, b)
                            + self._log_jac(k, r, b[r]))
            else:
                z0 = beta[r]
                bp = self._beta_prior(k)

                def f(z):
                    b = beta.copy()
                    b[r] = z
                    return blk.loglik(base, b) + bp.logpdf(z)
            h = 1e-3
            d2 = (f(z0 + h) - 2 * f(z0) + f(z0 - h)) / (h * h)
            sd = 1.0 / math.sqrt(-d2) if math.isfinite(d2) and d2 < 0 else 1.0
            out[r] = 2.4 * min(max(sd, 1e-4), 5.0)
        return out

    # -- updates ---------------------------------------------------------------

    def _update_base(self, k, r):
        blk = self.blocks[k]
        cur = self.base[k]
        z = self._to_z(k, r, cur[r])
        z_new = z + math.exp(self.base_log_scale[k][r]) * self.rng.standard_normal()
        value = self._from_z(k, r, z_new)
        self.win_prop[k][0][r] += 1
        if not value > 0 or not math.isfinite(value):
            return
        new = cur.copy()
        new[r] = value
        lp_new = self._base_log_prior(k, r, new)
        if lp_new == -math.inf:
            self.rng.random()
            return
        ll_new = blk.propose_baseline(r, value)
        log_ratio = (ll_new - blk.ll + lp_new - self._base_log_prior(k, r, cur)
                     + self._log_jac(k, r, value) - self._log_jac(k, r, cur[r]))
        if math.log(self.rng.random()) < log_ratio:
            blk.commit()
            self.base[k] = new
            self.win_acc[k][0][r] += 1

    def _update_beta(self, k, j):
        blk = self.blocks[k]
        bp = self._beta_prior(k)
        if self.gamma is not None and self.gamma[k][j] == 0:
            # excluded: the likelihood does not involve beta_j, draw from the slab
            self.beta[k][j] = bp.sample(self.rng)
            return
        cur = self.beta[k][j]
        value = cur + math.exp(self.beta_log_scale[k][j]) * self.rng.standard_normal()
        self.win_prop[k][1][j] += 1
        lp_new = bp.logpdf(value)
        u = self.rng.random()
        if lp_new == -math.inf:
            return
        ll_new = blk.propose_beta(j, value)
        log_ratio = ll_new - blk.ll + lp_new - bp.logpdf(cur)
        if math.log(u) < log_ratio:
            blk.commit()
            self.beta[k][j] = value
            self.win_acc[k][1][j] += 1

    def _update_gamma(self, k, j):
        blk = self.blocks[k]
        current = self.gamma[k][j]
        if current == 1:
            ll1 = blk.ll
            ll0 = blk.propose_beta(j, 0.0)
        else:
            ll0 = blk.ll
            ll1 = blk.propose_beta(j, self.beta[k][j])
        eta = self.incl_prob[k]
        log_odds = ll1 - ll0 + math.log(eta) - math.log1p(-eta)
        new = 1 if self.rng.random() < _expit(log_odds) else 0
        if new != current:
            blk.commit()
            self.gamma[k][j] = new

    def _update_incl_prob(self, k):
        p = len(self.gamma[k])
        s = int(self.gamma[k].sum())
        x = self.rng.beta(self.ss.a + s, self.ss.b + p - s)
        self.incl_prob[k] = min(max(float(x), 1e-300), 1.0 - 1e-16)

    def step(self):
        self._refresh()
        for k in range(self.spec.K):
            for r in range(len(self.base[k])):
                self._update_base(k, r)
            for j in range(len(self.beta[k])):
                self._update_beta(k, j)
                if self.gamma is not None and self.ss.fix_gamma is None:
                    self._update_gamma(k, j)
            if self.gamma is not None and len(self.gamma[k]):
                self._update_incl_prob(k)
        self.iteration += 1

    def _adapt(self):
        self.adapt_round += 1
        gain = min(1.0, 3.0 / math.sqrt(self.adapt_round))
        target = self.config.target_acceptance
        window = self.config.adaptation_window
        for k, c in enumerate(self.spec.causes):
            names = c.param_names()
            for which, scales in ((0, self.base_log_scale[k]), (1, self.beta_log_scale[k])):
                acc, prop = self.win_acc[k][which], self.win_prop[k][which]
                for i in range(len(scales)):
                    if prop[i] == 0:
                        continue
                    if acc[i] == 0 and prop[i] >= window:
                        name = names[i] if which == 0 else names[len(self.base[k]) + i]
                        raise SamplerError(f"zero acceptance over an adaptation window in block {name}")
                    scales[i] += gain * (acc[i] / prop[i] - target)
        self._reset_counters()

    def _accumulate_totals(self):
        for k, c in enumerate(self.spec.causes):
            names = c.param_names()
            nb = len(self.base[k])
            for i in range(nb):
                self.total_acc[names[i]] += int(self.win_acc[k][0][i])
                self.total_prop[names[i]] += int(self.win_prop[k][0][i])
            for j in range(len(self.beta[k])):
                self.total_acc[names[nb + j]] += int(self.win_acc[k][1][j])
                self.total_prop[names[nb + j]] += int(self.win_prop[k][1][j])
        self._reset_counters()

    def run_burn_in(self, n: int):
        """Adaptive phase; step sizes change every adaptation window."""
        window = self.config.adaptation_window
        for _ in range(n):
            self.step()
            if self.iteration % window == 0:
                self._adapt()
        self._reset_counters()

    def run_retained(self, n: int, thin: int = 1):
        """Frozen-kernel phase; returns (draws, iteration numbers)."""
        rows, its = [], []
        for i in range(n):
            self.step()
            if (i + 1) % thin == 0:
                rows.append(self.current())
                its.append(self.iteration)
        self._accumulate_totals()
        width = len(self.column_names())
        return np.array(rows, dtype=float).reshape(len(rows), width), np.array(its, dtype=int)

    def current(self) -> np.ndarray:
        vals = []
        for k in range(self.spec.K):
            vals.extend(self.base[k])
            vals.extend(self._effective_beta(k))
        if self.gamma is not None:
            for k in range(self.spec.K):
                vals.extend(self.gamma[k])
                vals.append(self.incl_prob[k])
        return np.array(vals, dtype=float)

    def column_names(self) -> list[str]:
        names = self.spec.param_names()
        if self.gamma is not None:
            names.extend(spike_slab_names(self.spec))
        return names

    def acceptance_rates(self) -> dict[str, float]:
        return {n: (self.total_acc[n] / self.total_prop[n] if self.total_prop[n] else float("nan"))
                for n in self.total_acc}

    def snapshot(self) -> ChainState:
        return ChainState(
            base=[b.copy() for b in self.base],
            beta=[b.copy() for b in self.beta],
            gamma=None if self.gamma is None else [g.copy() for g in self.gamma],
            incl_prob=None if self.incl_prob is None else list(self.incl_prob),
            base_log_scale=[s.copy() for s in self.base_log_scale],
            beta_log_scale=[s.copy() for s in self.beta_log_scale],
            rng_state=self.rng.bit_generator.state,
            iteration=self.iteration,
            adapt_round=self.adapt_round,
        )

    def restore(self, state: ChainState):
        self.base = [b.copy() for b in state.base]
        self.beta = [b.copy() for b in state.beta]
        self.gamma = None if state.gamma is None else [g.copy() for g in state.gamma]
        self.incl_prob = None if state.incl_prob is None else list(state.incl_prob)
        self.base_log_scale = [s.copy() for s in state.base_log_scale]
        self.beta_log_scale = [s.copy() for s in state.beta_log_scale]
        self.rng.bit_generator.state = state.rng_state
        self.iteration = state.iteration
        self.adapt_round = state.adapt_round
        self._reset_counters()
        self._refresh()


def spike_slab_names(spec: ModelSpec) -> list[str]:
    names = []
    for c in spec.causes:
        names.extend(f"{c.label}.incl.{v}" for v in c.covariates)
        names.append(f"{c.label}.eta")
    return names


@dataclass
class PosteriorSample:
    """Retained draws, shape ``(chains, M, P)``, with column names."""

    spec: ModelSpec
    names: list[str]
    draws: np.ndarray
    iterations: np.ndarray
    config: SamplerConfig | None = None
    acceptance: dict[str, list[float]] = field(default_factory=dict)

    def __post_init__(self):
        self.draws = np.asarray(self.draws, dtype=float)
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must have shape (chains, M, len(names))")
        if self.names[:self.spec.n_params] != self.spec.param_names():
            raise ModelSpecError("sample columns do not match the model parameters")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    def column(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape ``(chains, M)``."""
        return self.draws[:, :, self.names.index(name)]

    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.draws.shape[2])

    def parameter_vectors(self):
        n = self.spec.n_params
        for row in self.pooled():
            yield self.spec.unflatten(row[:n])

    @property
    def has_spike_slab(self) -> bool:
        return len(self.names) > self.spec.n_params

    def write_archive(self, path_or_buf):
        """Columnar text: ``chain,iteration,<parameter names>``, one row per draw."""
        own = isinstance(path_or_buf, str)
        fh = open(path_or_buf, "w", encoding="utf-8", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["chain", "iteration", *self.names])
            for c in range(self.n_chains):
                for m in range(self.draws.shape[1]):
                    w.writerow([c + 1, int(self.iterations[c, m]),
                                *[repr(float(v)) for v in self.draws[c, m]]])
        finally:
            if own:
                fh.close()

    def archive_text(self) -> str:
        buf = io.StringIO()
        self.write_archive(buf)
        return buf.getvalue()


class ArchiveError(ValueError):
    pass


def read_archive(path_or_text: str, spec: ModelSpec) -> PosteriorSample:
    """Load a draw archive written by :meth:`PosteriorSample.write_archive`."""
    if "\n" in path_or_text:
        text = path_or_text
    else:
        with open(path_or_text, encoding="utf-8") as fh:
            text = fh.read()
    df = pd.read_csv(io.StringIO(text), float_precision="round_trip")
    if list(df.columns[:2]) != ["chain", "iteration"]:
        raise ArchiveError("archive must start with chain and iteration columns")
    names = list(df.columns[2:])
    if names[:spec.n_params] != spec.param_names():
        raise ArchiveError(
            f"archive/model mismatch: archive has {names[:spec.n_params]}, "
            f"model expects {spec.param_names()}")
    chains = sorted(df["chain"].unique())
    sizes = {int((df["chain"] == c).sum()) for c in chains}
    if len(sizes) != 1:
        raise ArchiveError("chains in archive have different lengths")
    M = sizes.pop()
    draws = np.stack([df.loc[df["chain"] == c, names].to_numpy(float) for c in chains])
    its = np.stack([df.loc[df["chain"] == c, "iteration"].to_numpy(int) for c in chains])
    return PosteriorSample(spec=spec, names=names, draws=draws.reshape(len(chains), M, -1),
                           iterations=its)


def _run_one_chain(args):
    spec, data, priors, config, chain_index, theta0, spike_slab = args
    rng = np.random.default_rng(config.seed + chain_index)
    if theta0 is None:
        theta0 = initialize(spec, data, config.init, rng, priors)
    chain = Chain(spec, data, priors, config, theta0, rng, spike_slab)
    chain.run_burn_in(config.burn_in)
    draws, its = chain.run_retained(config.iterations - config.burn_in, config.thin)
    return draws, its, chain.acceptance_rates(), chain.column_names()


def run_chains(spec: ModelSpec, data: Dataset, priors: PriorSpec | None = None,
               config: SamplerConfig | None = None, init: ParameterVector | None = None,
               spike_slab=None) -> PosteriorSample:
    """Run ``config.chains`` chains; chain ``c`` is seeded with ``seed + c``."""
    config = config or SamplerConfig()
    priors = priors or default_priors(spec)
    if len(priors.causes) != spec.K:
        raise SamplerError(f"prior has {len(priors.causes)} causes, model has {spec.K}")
    spec.designs(data)
    jobs = [(spec, data, priors, config, c, init, spike_slab) for c in range(config.chains)]
    if config.workers > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one_chain, jobs))
    else:
        results = [_run_one_chain(j) for j in jobs]
    names = results[0][3]
    acceptance = {n: [r[2][n] for r in results] for n in results[0][2]}
    return PosteriorSample(
        spec=spec,
        names=names,
        draws=np.stack([r[0] for r in results]),
        iterations=np.stack([r[1] for r in results]),
        config=config,
        acceptance=acceptance,
    )


def _as_chains(s, parameter):
    if isinstance(s, PosteriorSample):
        return s.column(parameter) if isinstance(parameter, str) else s.draws[:, :, parameter]
    return np.asarray(s, dtype=float)


def gelman_rubin(s, parameter=None) -> float:
    """Potential scale reduction factor.

    ``s`` is a :class:`PosteriorSample` (with a parameter name or column
    index) or an array of shape ``(chains, M)``.  Uses
    ``V = (M - 1)/M W + B/M`` and returns ``sqrt(V / W)``.
    """
    x = _as_chains(s, parameter)
    m, M = x.shape
    if m < 2:
        raise SamplerError("Gelman-Rubin needs at least two chains")
    W = float(np.mean(np.var(x, axis=1, ddof=1)))
    B = M * float(np.var(np.mean(x, axis=1), ddof=1))
    if W == 0:
        return 1.0 if B == 0 else math.inf
    V = (M - 1) / M * W + B / M
    return math.sqrt(V / W)


def effective_sample_size(s, parameter=None) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    x = _as_chains(s, parameter)
    if x.ndim == 1:
        x = x[None, :]
    m, M = x.shape
    if M < 4:
        return float(m * M)
    centered = x - x.mean(axis=1, keepdims=True)
    nfft = 1 << (2 * M - 1).bit_length()
    f = np.fft.rfft(centered, n=nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=1)[:, :M] / M
    chain_var = acov[:, 0] * M / (M - 1)
    W = chain_var.mean()
    var_plus = W * (M - 1) / M
    if m > 1:
        var_plus += np.var(x.mean(axis=1), ddof=1)
    if var_plus <= 0:
        return float(m * M)
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # pairs of consecutive autocorrelations, truncated at the first negative pair
    total = 0.0
    prev = math.inf
    for t in range(0, M - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        prev = pair
        total += pair
    tau = -1.0 + 2.0 * total
    return float(m * M / max(tau, 1.0 / math.log10(m * M + 10)))


def mcse_mean(s, parameter=None) -> float:
    x = _as_chains(s, parameter)
    return float(np.std(x, ddof=1) / math.sqrt(effective_sample_size(x)))


def convergence_table(sample: PosteriorSample) -> pd.DataFrame:
    rows = []
    for name in sample.names:
        x = sample.column(name)
        rhat = gelman_rubin(x) if sample.n_chains > 1 else float("nan")
        rows.append({"parameter": name, "rhat": rhat, "ess": effective_sample_size(x)})
    return pd.DataFrame(rows)


def prior_sensitivity(spec: ModelSpec, data: Dataset, config: SamplerConfig,
                      base: PriorSpec | None = None,
                      alternatives: dict[str, PriorSpec] | None = None) -> pd.DataFrame:
    """Shift of posterior means under alternative priors, in base posterior sds.

    Default alternatives are the coefficient priors N(0, precision 0.01)
    and U(-10, 10).
    """
    from .priors import NormalPrecision

    base = base or default_priors(spec)
    if alternatives is None:
        alternatives = {
            "normal-precision-0.01": base.with_beta_prior(NormalPrecision(0.0, 0.01)),
            "uniform-10": base.with_beta_prior(Uniform(-10.0, 10.0)),
        }
    ref = run_chains(spec, data, base, config).pooled()[:, :spec.n_params]
    mean0, sd0 = ref.mean(axis=0), ref.std(axis=0, ddof=1)
    rows = []
    for label, prior in alternatives.items():
        alt = run_chains(spec, data, prior, config).pooled()[:, :spec.n_params]
        shift = np.abs(alt.mean(axis=0) - mean0) / np.where(sd0 > 0, sd0, np.inf)
        for name, sh in zip(spec.param_names(), shift):
            rows.append({"prior": label, "parameter": name, "shift_sd": float(sh)})
    return pd.DataFrame(rows)


__all__ = [
    "ArchiveError",
    "Chain",
    "ChainState",
    "PosteriorSample",
    "SamplerConfig",
    "SamplerConfigError",
    "SamplerError",
    "convergence_table",
    "effective_sample_size",
    "gelman_rubin",
    "initialize",
    "mcse_mean",
    "prior_sensitivity",
    "read_archive",
    "run_chains",
]
