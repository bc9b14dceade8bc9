"""Command-line front end.

    bayescr fit --config run.json
    bayescr select --config run.json
    bayescr assess --config run.json [--archive draws.csv]
    bayescr predict --config run.json [--archive draws.csv]
    bayescr simulate --config sim.json
    bayescr validate --config run.json

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import warnings

import numpy as np
import pandas as pd
import scipy

from . import __version__
from .assess import AssessmentError, assess, compare_models
from .data import DataError, read_dataset, standardize, validate
from .hazard import HazardError
from .likelihood import LikelihoodError
from .model import ModelSpec, ModelSpecError
from .outputs import PredictionError, Profile, encode_profile, posterior_summary, predict_profile
from .priors import NormalPrecision, PriorError, priors_from_config
from .sampler import (
    ArchiveError,
    SamplerConfig,
    SamplerConfigError,
    SamplerError,
    convergence_table,
    read_archive,
    run_chains,
)
from .selection import SelectionError, SpikeSlabConfig, bf_gibbs_search, cause_view, merged_inclusion_table, spike_slab_fit
from .simulate import SimulationError, simulate_dataset, truth_from_config, write_dataset

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

TOP_LEVEL_KEYS = {"data", "model", "priors", "sampler", "seed", "selection", "assess",
                  "profiles", "predict", "simulate", "output_dir"}
SAMPLER_KEYS = {"chains", "iterations", "burn_in", "thin", "adaptation_window",
                "target_acceptance", "init", "workers"}


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


# -- configuration -----------------------------------------------------------

def load_config(path: str) -> dict:
    """Read a config document; a run manifest is accepted and its config echo reused."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config is not valid JSON: {exc}"]) from None
    if "manifest_version" in doc:
        return doc["config"]
    base = os.path.dirname(os.path.abspath(path))
    return _resolve_paths(doc, base)


def _resolve_paths(cfg: dict, base: str) -> dict:
    cfg = json.loads(json.dumps(cfg))

    def fix(block, key):
        if isinstance(block, dict) and isinstance(block.get(key), str):
            block[key] = os.path.normpath(os.path.join(base, block[key]))

    fix(cfg.get("data"), "csv")
    fix(cfg.get("data"), "schema")
    fix(cfg.get("predict"), "archive")
    fix(cfg, "output_dir")
    models = (cfg.get("assess") or {}).get("models") or []
    for m in models:
        fix(m, "archive")
    return cfg


def sampler_config(cfg: dict) -> SamplerConfig:
    block = dict(cfg.get("sampler") or {})
    unknown = set(block) - SAMPLER_KEYS
    if unknown:
        raise ConfigError([f"sampler: unknown field(s) {sorted(unknown)}"])
    return SamplerConfig(seed=int(cfg.get("seed", 0)), **block)


def validate_config(cfg: dict, command: str) -> list[str]:
    """All problems with a config, for reporting at once."""
    problems = []
    unknown = set(cfg) - TOP_LEVEL_KEYS
    if unknown:
        problems.append(f"unknown top-level field(s) {sorted(unknown)}")
    seed = cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        problems.append("seed: must be a nonnegative integer")
    if command in ("fit", "select", "assess", "predict", "validate"):
        data = cfg.get("data")
        if not isinstance(data, dict):
            problems.append("data: block missing")
        else:
            for key in ("csv", "schema"):
                if key not in data:
                    problems.append(f"data.{key}: missing")
                elif not os.path.exists(data[key]):
                    problems.append(f"data.{key}: file not found: {data[key]}")
    spec = None
    if command in ("fit", "select", "predict") or (command == "assess" and "model" in cfg):
        try:
            spec = ModelSpec.from_dict(cfg["model"])
        except KeyError as exc:
            problems.append(f"model: missing field {exc}")
        except (ModelSpecError, TypeError) as exc:
            problems.append(f"model: {exc}")
    if spec is not None:
        try:
            priors_from_config(spec, cfg.get("priors"))
        except (PriorError, KeyError, TypeError, ValueError) as exc:
            problems.append(f"priors: {exc}")
    if command in ("fit", "select", "assess"):
        try:
            sampler_config(cfg)
        except SamplerConfigError as exc:
            problems.extend(f"sampler.{p}" for p in exc.problems)
        except ConfigError as exc:
            problems.extend(exc.problems)
        except TypeError as exc:
            problems.append(f"sampler: {exc}")
    if command == "select":
        method = (cfg.get("selection") or {}).get("method", "both")
        if method not in ("bayes-factor", "spike-slab", "both"):
            problems.append("selection.method: must be bayes-factor, spike-slab or both")
    if command == "predict":
        profiles = cfg.get("profiles")
        if not profiles:
            problems.append("profiles: at least one profile is required")
        else:
            for i, p in enumerate(profiles):
                if "name" not in p or "values" not in p:
                    problems.append(f"profiles[{i}]: needs name and values")
    if command == "assess":
        models = (cfg.get("assess") or {}).get("models")
        if models is None and "model" not in cfg:
            problems.append("assess.models: list of models (or a top-level model) required")
        for i, m in enumerate(models or []):
            if "name" not in m or "model" not in m:
                problems.append(f"assess.models[{i}]: needs name and model")
    if command == "simulate":
        sim = cfg.get("simulate")
        if not isinstance(sim, dict):
            problems.append("simulate: block missing")
        else:
            for key in ("n", "model", "truth"):
                if key not in sim:
                    problems.append(f"simulate.{key}: missing")
    return problems


# -- outputs -------------------------------------------------------------------

def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class _Writer:
    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.outputs: list[str] = []

    def path(self, name: str) -> str:
        self.outputs.append(name)
        return os.path.join(self.out_dir, name)

    def text(self, name: str, content: str):
        with open(self.path(name), "w", encoding="utf-8", newline="\n") as fh:
            fh.write(content)

    def table(self, stem: str, df: pd.DataFrame, index: bool = False):
        """Aligned text and CSV versions of a table."""
        txt = df.to_string(index=index, float_format=lambda v: f"{v:.4f}") + "\n"
        self.text(f"{stem}.txt", txt)
        with open(self.path(f"{stem}.csv"), "w", encoding="utf-8", newline="") as fh:
            df.to_csv(fh, index=index, lineterminator="\n")

    def manifest(self, command: str, cfg: dict, inputs: list[str]):
        doc = {
            "manifest_version": 1,
            "command": command,
            "config": cfg,
            "seed": cfg.get("seed", 0),
            "versions": {
                "bayescr": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "pandas": pd.__version__,
                "python": platform.python_version(),
            },
            "inputs": {p: _sha256(p) for p in inputs if os.path.exists(p)},
            "outputs": {n: _sha256(os.path.join(self.out_dir, n)) for n in sorted(set(self.outputs))},
        }
        with open(os.path.join(self.out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _load_data(cfg: dict):
    d = read_dataset(cfg["data"]["csv"], cfg["data"]["schema"])
    which = cfg["data"].get("standardize") or []
    if which:
        d, _ = standardize(d, which)
    return d


def _inputs(cfg):
    data = cfg.get("data") or {}
    return [p for p in (data.get("csv"), data.get("schema")) if p]


# -- commands ------------------------------------------------------------------

def cmd_fit(cfg: dict, out: _Writer):
    d = _load_data(cfg)
    spec = ModelSpec.from_dict(cfg["model"])
    priors = priors_from_config(spec, cfg.get("priors"))
    sc = sampler_config(cfg)
    sample = run_chains(spec, d, priors, sc)
    sample.write_archive(out.path("draws.csv"))
    out.table("summary", posterior_summary(sample).reset_index())
    conv = convergence_table(sample)
    conv["acceptance"] = [float(np.mean(sample.acceptance[n])) for n in conv["parameter"]]
    out.table("convergence", conv)
    return _inputs(cfg)


def cmd_select(cfg: dict, out: _Writer):
    d = _load_data(cfg)
    spec = ModelSpec.from_dict(cfg["model"])
    sel = cfg.get("selection") or {}
    method = sel.get("method", "both")
    seed = int(cfg.get("seed", 0))
    bf_results, ss_report = {}, None
    if method in ("bayes-factor", "both"):
        bfc = sel.get("bayes_factor") or {}
        for k, c in enumerate(spec.causes, start=1):
            view = cause_view(d, k, c.covariates, c.baseline, c.knots)
            mp = bf_gibbs_search(view, iterations=int(bfc.get("iterations", 1000)),
                                 burn_in=int(bfc.get("burn_in", 300)),
                                 initial_dimension=int(bfc.get("initial_dimension", 5)),
                                 seed=seed + k - 1, c=float(bfc.get("c", 1.0)))
            bf_results[c.label] = mp
            out.table(f"top_models_{c.label}", mp.top(int(bfc.get("top", 5))))
            trace = pd.DataFrame(mp.trace, columns=list(mp.columns))
            trace.insert(0, "sweep", np.arange(1, len(trace) + 1))
            with open(out.path(f"inclusion_trace_{c.label}.csv"), "w", encoding="utf-8", newline="") as fh:
                trace.to_csv(fh, index=False, lineterminator="\n")
    if method in ("spike-slab", "both"):
        ssc = sel.get("spike_slab") or {}
        ss = SpikeSlabConfig(slab=NormalPrecision(0.0, float(ssc.get("slab_precision", 0.001))),
                             a=float(ssc.get("a", 1.0)), b=float(ssc.get("b", 1.0)))
        priors = priors_from_config(spec, cfg.get("priors"))
        ss_report = spike_slab_fit(spec, d, ss, sampler_config(cfg), priors)
        mm = ss_report.median_model()
        out.text("median_model.txt", "".join(f"{c}: {' + '.join(v) if v else '(null)'}\n"
                                             for c, v in mm.items()))
    out.table("inclusion", merged_inclusion_table(bf_results or None, ss_report))
    return _inputs(cfg)


def cmd_assess(cfg: dict, out: _Writer, archive: str | None = None):
    d = _load_data(cfg)
    block = cfg.get("assess") or {}
    models = block.get("models")
    if models is None:
        models = [{"name": "model", "model": cfg["model"], "archive": archive}]
    reports, inputs = {}, _inputs(cfg)
    for m in models:
        spec = ModelSpec.from_dict(m["model"])
        path = m.get("archive")
        if path:
            sample = read_archive(path, spec)
            inputs.append(path)
        else:
            priors = priors_from_config(spec, m.get("priors", cfg.get("priors")))
            sample = run_chains(spec, d, priors, sampler_config(cfg))
        rep = assess(sample, d, spec)
        reports[m["name"]] = rep
        out.table(f"cpo_{m['name']}", rep.cpo_table())
    out.table("criteria", compare_models(reports))
    return inputs


def cmd_predict(cfg: dict, out: _Writer, archive: str | None = None):
    d = _load_data(cfg)
    spec = ModelSpec.from_dict(cfg["model"])
    pred = cfg.get("predict") or {}
    path = archive or pred.get("archive")
    if not path:
        raise ConfigError(["predict.archive: required (or pass --archive)"])
    sample = read_archive(path, spec)
    max_time = float(pred.get("max_time", d.time.max()))
    points = int(pred.get("grid_points", 200))
    frames = []
    for prof in cfg["profiles"]:
        try:
            xs = encode_profile(spec, d.schema, Profile(prof["name"], prof["values"]))
        except PredictionError as exc:
            raise ConfigError([f"profiles.{prof['name']}: {exc}"]) from None
        for s0 in prof.get("s0", [0.0]):
            s0 = float(s0)
            grid = np.linspace(s0, 1.1 * max_time, points)
            cs = predict_profile(sample, xs, grid, s0)
            if cs.excluded:
                warnings.warn(f"profile {prof['name']}, s0={s0}: {cs.excluded} draws excluded")
            long = cs.to_frame()
            long.insert(0, "s0", s0)
            long.insert(0, "profile", prof["name"])
            frames.append(long)
            for target in cs.targets:
                part = long[long["target"] == target][["time", "mean", "lo", "hi"]]
                with open(out.path(f"curve_{prof['name']}_s{s0:g}_{target}.csv"), "w",
                          encoding="utf-8", newline="") as fh:
                    part.to_csv(fh, index=False, lineterminator="\n")
    allc = pd.concat(frames, ignore_index=True)
    with open(out.path("curves_long.csv"), "w", encoding="utf-8", newline="") as fh:
        allc.to_csv(fh, index=False, lineterminator="\n")
    return _inputs(cfg) + [path]


def cmd_simulate(cfg: dict, out: _Writer):
    sim = cfg["simulate"]
    ts = truth_from_config(sim)
    d = simulate_dataset(ts, int(sim["n"]), int(cfg.get("seed", 0)))
    write_dataset(d, out.path("data.csv"), out.path("schema.json"))
    return []


def cmd_validate(cfg: dict, out: _Writer):
    d = _load_data(cfg)
    rep = validate(d)
    out.text("validation.txt", rep.to_text())
    sys.stdout.write(rep.to_text())
    return _inputs(cfg)


COMMANDS = {"fit": cmd_fit, "select": cmd_select, "assess": cmd_assess, "predict": cmd_predict,
            "simulate": cmd_simulate, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayescr", description="Bayesian competing-risks modeling")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON config document (or a run manifest)")
        s.add_argument("--output-dir", help="override output_dir")
        s.add_argument("--seed", type=int, help="override seed")
        if name in ("assess", "predict"):
            s.add_argument("--archive", help="draw archive to use")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.output_dir:
            cfg["output_dir"] = os.path.abspath(args.output_dir)
        if getattr(args, "archive", None):
            args.archive = os.path.abspath(args.archive)
        problems = validate_config(cfg, args.command)
        if problems:
            raise ConfigError(problems)
        out = _Writer(cfg.get("output_dir") or os.path.abspath("bayescr-out"))
        fn = COMMANDS[args.command]
        if args.command in ("assess", "predict"):
            inputs = fn(cfg, out, getattr(args, "archive", None))
        else:
            inputs = fn(cfg, out)
        out.manifest(args.command, cfg, inputs)
        return EXIT_OK
    except (ConfigError, SamplerConfigError, ModelSpecError, PriorError) as exc:
        problems = getattr(exc, "problems", [str(exc)])
        sys.stderr.write("configuration error:\n" + "".join(f"  {p}\n" for p in problems))
        return EXIT_CONFIG
    except (DataError, ArchiveError, SimulationError) as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except (SamplerError, LikelihoodError, HazardError, SelectionError, AssessmentError,
            PredictionError, FloatingPointError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


def main():
    sys.exit(run())


__all__ = ["ConfigError", "load_config", "main", "run", "validate_config"]
