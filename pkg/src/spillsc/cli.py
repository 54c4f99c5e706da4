"""Command-line interface.

One JSON config file per run plus two override flags (--seed, --out).
Subcommands: fit, simulate, replicate, distance, summarize. Unknown config
keys are rejected and validation reports every violation, not just the
first. Paths inside the config resolve relative to the config file. Exit
codes: 0 success, 1 validation error, 2 numerical failure; errors go to
stderr with an ``ERROR:`` prefix.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .counterfactual import EffectEstimate, effects, impute
from .distance import cutoff_from_exclusion_fraction, panel_distances
from .errors import ConfigError, NumericalError, SpillscError, ValidationError
from .mcmc import McmcConfig, diagnostics, fit
from .model import PriorSpec, assign_components
from .panel import IngestionSettings, load_panel, standardize, trim_donors
from .replication import ReplicationPlan, run as run_replication
from .simgen import SimConfig, generate

__all__ = ["main", "console_entry", "validate_config", "RunConfig"]

_COMMANDS = ("fit", "simulate", "replicate", "distance", "summarize")
_MISSING = object()


# ---------------------------------------------------------------------------
# strict config parsing

def _number(x):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ValueError("must be a number")
    return float(x)


def _integer(x):
    if isinstance(x, bool) or not isinstance(x, int):
        raise ValueError("must be an integer")
    return int(x)


def _boolean(x):
    if not isinstance(x, bool):
        raise ValueError("must be true or false")
    return x


def _string(x):
    if not isinstance(x, str):
        raise ValueError("must be a string")
    return x


def _string_list(x):
    if not isinstance(x, list) or not all(isinstance(v, str) for v in x):
        raise ValueError("must be a list of strings")
    return list(x)


def _number_list(x):
    if not isinstance(x, list) or not x:
        raise ValueError("must be a nonempty list of numbers")
    return [_number(v) for v in x]


def _number_in(lo, hi):
    def cast(x):
        v = _number(x)
        if not (lo <= v <= hi):
            raise ValueError(f"must be in [{lo:g}, {hi:g}]")
        return v
    return cast


class _Section:
    """Accessor over one JSON object that records violations and unknown keys."""

    def __init__(self, raw, path, errors):
        self.path = path
        self.errors = errors
        self.seen = set()
        if raw is None or isinstance(raw, dict):
            self.raw = raw
        else:
            self.raw = None
            errors.append(f"{path}: must be a JSON object")

    def take(self, key, cast, default=_MISSING):
        self.seen.add(key)
        if self.raw is None or key not in self.raw:
            if default is _MISSING:
                self.errors.append(f"{self.path}.{key}: required key is missing")
                return None
            return default
        try:
            return cast(self.raw[key])
        except ValueError as exc:
            self.errors.append(f"{self.path}.{key}: {exc}")
            return None

    def sub(self, key, required=True):
        self.seen.add(key)
        if self.raw is None or key not in self.raw:
            if required:
                self.errors.append(f"{self.path}.{key}: required section is missing")
            return _Section(None, f"{self.path}.{key}", self.errors)
        return _Section(self.raw[key], f"{self.path}.{key}", self.errors)

    def has(self, key):
        return self.raw is not None and key in self.raw

    def finish(self):
        if self.raw is None:
            return
        for k in sorted(set(self.raw) - self.seen):
            self.errors.append(f"{self.path}.{k}: unknown key")


def _build(factory, path, errors, **kwargs):
    """Instantiate a config object, converting its invariant errors to violations."""
    if errors:
        return None
    try:
        return factory(**kwargs)
    except ValidationError as exc:
        errors.append(f"{path}: {exc}")
        return None


@dataclass
class RunConfig:
    """Validated settings for one CLI run."""

    command: str
    seed: int
    output_dir: Path
    outcomes_path: Path | None = None
    covariates_path: Path | None = None
    ingestion: IngestionSettings | None = None
    trim_distance: float | None = None
    prior: PriorSpec | None = None
    mcmc: McmcConfig | None = None
    sim: SimConfig | None = None
    plan: ReplicationPlan | None = None
    alpha: float = 0.05
    dump_draws: bool = False
    kappa_d: float | None = None
    exclusion_fraction: float | None = None
    draws_path: Path | None = None
    config_digest: str = ""


def _parse_data(section, base, errors):
    outcomes = section.take("outcomes", _string)
    covariates = section.take("covariates", _string)
    t0 = section.take("intervention_time", _integer)
    coord_cols = section.take("coordinate_columns", _string_list)
    cov_cols = section.take("covariate_columns", _string_list, default=[])
    trim = section.take("trim_distance", _number, default=None)
    section.finish()
    if errors:
        return None, None, None, None
    settings = _build(IngestionSettings, section.path, errors,
                      intervention_time=t0, coordinate_columns=tuple(coord_cols),
                      covariate_columns=tuple(cov_cols))
    return (base / outcomes, base / covariates, settings, trim)


def _parse_prior(section, errors):
    kwargs = dict(
        family=section.take("family", _string),
        kappa_d=section.take("kappa_d", _number_in(0.0, 1.0), default=0.0),
        mu_ar=section.take("mu_ar", _number, default=0.0),
        sigma_ar=section.take("sigma_ar", _number, default=3.0),
        nu_var=section.take("nu_var", _number, default=4.0),
        tau_var=section.take("tau_var", _number, default=1.0),
        variance_prior_on=section.take("variance_prior_on", _string, default="variance"),
    )
    if section.has("rho"):
        kwargs["rho"] = section.take("rho", _number)
    else:
        section.seen.add("rho")
    if section.has("exclusion_fraction"):
        kwargs["exclusion_fraction"] = section.take("exclusion_fraction", _number)
    else:
        section.seen.add("exclusion_fraction")
    section.finish()
    return _build(PriorSpec, section.path, errors, **kwargs)


def _parse_mcmc(section, errors, seed):
    kwargs = dict(
        n_chains=section.take("n_chains", _integer, default=1),
        n_iterations=section.take("n_iterations", _integer, default=4000),
        n_burnin=section.take("n_burnin", _integer, default=None),
        thin=section.take("thin", _integer, default=1),
        slice_width=section.take("slice_width", _number, default=1.0),
        max_slice_steps=section.take("max_slice_steps", _integer, default=100),
        seed=seed,
    )
    section.finish()
    return _build(McmcConfig, section.path, errors, **kwargs)


def _parse_sim(section, errors, seed, allow_spill=True):
    kwargs = dict(
        T0=section.take("T0", _integer, default=30),
        n_post=section.take("n_post", _integer, default=1),
        J=section.take("J", _integer, default=50),
        tau_true=section.take("tau_true", _number, default=7.0),
        xi_spill=section.take("xi_spill", _number, default=-10.0),
        mu_shift=tuple(section.take("mu_shift", _number_list, default=[0.0, 0.0])),
        seed=seed,
    )
    if allow_spill:
        if section.has("rho_star"):
            kwargs["rho_star"] = section.take("rho_star", _number)
        else:
            section.seen.add("rho_star")
        if section.has("spill_fraction"):
            kwargs["spill_fraction"] = section.take("spill_fraction", _number)
        else:
            section.seen.add("spill_fraction")
    else:
        # the replication grid supplies the spillover level cell by cell
        kwargs["spill_fraction"] = 0.0
    section.finish()
    return _build(SimConfig, section.path, errors, **kwargs)


def validate_config(path, command, seed_override=None, out_override=None) -> RunConfig:
    """Parse and fully validate one run config; collects every violation.

    Raises
    ------
    ConfigError
        Carrying the complete list of violations.
    """
    path = Path(path)
    errors = []
    try:
        raw_text = path.read_text(encoding="utf-8")
        raw = json.loads(raw_text)
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read config ({exc})"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None

    base = path.resolve().parent
    root = _Section(raw, "config", errors)
    seed = root.take("seed", _integer, default=0)
    if seed_override is not None:
        seed = int(seed_override)
    out_dir = root.take("output_dir", _string, default="out")

    cfg = RunConfig(command=command, seed=seed,
                    output_dir=Path(out_override) if out_override else base / out_dir)
    cfg.config_digest = hashlib.sha256(raw_text.encode()).hexdigest()

    if command == "fit":
        cfg.outcomes_path, cfg.covariates_path, cfg.ingestion, cfg.trim_distance = \
            _parse_data(root.sub("data"), base, errors)
        cfg.prior = _parse_prior(root.sub("prior"), errors)
        cfg.mcmc = _parse_mcmc(root.sub("mcmc", required=False), errors, seed)
        cfg.alpha = root.take("alpha", _number_in(1e-6, 1 - 1e-6), default=0.05)
        cfg.dump_draws = root.take("dump_draws", _boolean, default=False)
    elif command == "simulate":
        cfg.sim = _parse_sim(root.sub("sim"), errors, seed)
    elif command == "replicate":
        plan = root.sub("plan")
        n_replicates = plan.take("n_replicates", _integer, default=200)
        sim = _parse_sim(plan.sub("sim", required=False), errors, seed, allow_spill=False)
        prior = _parse_prior(plan.sub("prior"), errors)
        mcmc = _parse_mcmc(plan.sub("mcmc", required=False), errors, seed)
        kappa_grid = plan.take("kappa_grid", _number_list, default=[0.0, 0.1, 0.5, 1.0])
        spill_grid = plan.take("spill_grid", _number_list, default=[0.0, 0.25, 0.5])
        parallelism = plan.take("parallelism", _integer, default=1)
        plan.finish()
        cfg.plan = _build(ReplicationPlan, "config.plan", errors,
                          n_replicates=n_replicates, sim=sim, prior=prior, mcmc=mcmc,
                          kappa_grid=tuple(kappa_grid or ()), spill_grid=tuple(spill_grid or ()),
                          parallelism=parallelism)
    elif command == "distance":
        cfg.outcomes_path, cfg.covariates_path, cfg.ingestion, cfg.trim_distance = \
            _parse_data(root.sub("data"), base, errors)
        cfg.kappa_d = root.take("kappa_d", _number_in(0.0, 1.0), default=0.0)
        cfg.exclusion_fraction = root.take("exclusion_fraction", _number, default=None)
    elif command == "summarize":
        draws = root.take("draws", _string)
        cfg.alpha = root.take("alpha", _number_in(1e-6, 1 - 1e-6), default=0.05)
        if draws is not None:
            cfg.draws_path = base / draws
    else:
        errors.append(f"unknown command {command!r}")
    root.finish()

    if errors:
        raise ConfigError(errors)
    return cfg


# ---------------------------------------------------------------------------
# output writers (CSV numbers use repr(): full round-trip precision)

def _fmt(x):
    return repr(float(x))


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _provenance(cfg: RunConfig, extra=None):
    out = {
        "command": cfg.command,
        "seed": cfg.seed,
        "config_sha256": cfg.config_digest,
        "version": __version__,
        "kernel_backend": BACKEND,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    if extra:
        out.update(extra)
    return out


def _effects_rows(effect_list):
    return [[e.period, _fmt(e.mean), _fmt(e.sd), _fmt(e.lower), _fmt(e.upper), _fmt(e.prob_negative)]
            for e in effect_list]


def _write_effects(out_dir, effect_list, cfg, extra_prov=None):
    _write_csv(out_dir / "effects.csv",
               ["t", "mean", "sd", "lower", "upper", "prob_negative"],
               _effects_rows(effect_list))
    _write_json(out_dir / "effects.json", {
        "alpha": effect_list[0].alpha if effect_list else cfg.alpha,
        "effects": [asdict(e) for e in effect_list],
        "provenance": _provenance(cfg, extra_prov),
    })


def _load_fit_inputs(cfg: RunConfig):
    panel = load_panel(cfg.outcomes_path, cfg.covariates_path, cfg.ingestion)
    if cfg.trim_distance is not None:
        panel = trim_donors(panel, cfg.trim_distance)
    return panel


def _impute_seed(seed):
    # disjoint from the chain streams spawned as SeedSequence(seed).spawn(...)
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(1 << 31,))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _cmd_fit(cfg: RunConfig):
    panel = _load_fit_inputs(cfg)
    std_panel, record = standardize(panel)
    distances = panel_distances(std_panel, kappa_d=cfg.prior.kappa_d)
    spec = cfg.prior.resolve_rho(distances)
    draws = fit(std_panel, spec, distances, cfg.mcmc)
    cf = impute(draws, panel, record, _impute_seed(cfg.seed))
    effect_list = effects(cf, panel, alpha=cfg.alpha)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_effects(out, effect_list, cfg, {"rho": spec.rho, "kappa_d": spec.kappa_d})
    diag = diagnostics(draws)
    _write_json(out / "diagnostics.json", {
        "split_rhat": diag.split_rhat,
        "ess_bulk": diag.ess_bulk,
        "sampler_stats": diag.sampler_stats,
        "n_chains": diag.n_chains,
        "n_retained": diag.n_retained,
        "provenance": _provenance(cfg),
    })
    if cfg.dump_draws:
        _dump_draws(out / "draws.csv", draws, cf, panel)
    return 0


def _dump_draws(path, draws, cf, panel):
    """Post-burn-in, thinned draws as chain,iteration,parameter,value rows."""
    C, M = draws.n_chains, draws.n_retained
    params = draws.scalar_parameters()
    tau = panel.treated_outcomes[panel.intervention_time:][None, :] - cf.values
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["chain", "iteration", "parameter", "value"])
        for c in range(C):
            for m in range(M):
                for name, arr in params.items():
                    w.writerow([c + 1, m + 1, name, _fmt(arr[c, m])])
                r = c * M + m
                for k, t in enumerate(cf.periods):
                    w.writerow([c + 1, m + 1, f"tau[{t}]", _fmt(tau[r, k])])


def _cmd_simulate(cfg: RunConfig):
    panel, truth = generate(cfg.sim)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    labels = panel.unit_labels
    Y = np.column_stack([panel.treated_outcomes, panel.donor_outcomes])
    for j, lab in enumerate(labels):
        for t in range(panel.n_periods):
            rows.append([lab, t + 1, _fmt(Y[t, j])])
    _write_csv(out / "outcomes.csv", ["unit_id", "time", "outcome"], rows)

    q = panel.covariates.shape[1]
    k = panel.coordinates.shape[1]
    header = ["unit_id", "treated"] + [f"x{i+1}" for i in range(q)] + [f"p{i+1}" for i in range(k)]
    rows = []
    for j, lab in enumerate(labels):
        rows.append([lab, 1 if j == 0 else 0]
                    + [_fmt(v) for v in panel.covariates[j]]
                    + [_fmt(v) for v in panel.coordinates[j]])
    _write_csv(out / "covariates.csv", header, rows)

    _write_json(out / "truth.json", {
        "tau_true": truth.tau_true,
        "xi_spill": truth.xi_spill,
        "rho_star": truth.rho_star,
        "affected_units": [labels[1 + j] for j in np.flatnonzero(truth.affected)],
        "donor_distances": {labels[1 + j]: truth.distances[j] for j in range(truth.distances.size)},
        "intervention_time": panel.intervention_time,
        "provenance": _provenance(cfg),
    })
    return 0


def _cmd_replicate(cfg: RunConfig):
    plan = replace(cfg.plan, sim=replace(cfg.plan.sim, seed=cfg.seed),
                   mcmc=replace(cfg.plan.mcmc, seed=cfg.seed))

    def progress(done, total):
        if done % 25 == 0 or done == total:
            print(f"replicate {done}/{total}", file=sys.stderr)

    metrics = run_replication(plan, progress=progress)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for m in metrics:
        for name, value in m.rows():
            rows.append([_fmt(m.kappa_d), _fmt(m.spill_fraction), name, _fmt(value),
                         m.n_successful_replicates])
    _write_csv(out / "metrics.csv", ["kappa_d", "spill_fraction", "metric", "value", "n_replicates"], rows)
    _write_json(out / "metrics.json", {
        "plan": {
            "n_replicates": plan.n_replicates,
            "kappa_grid": list(plan.kappa_grid),
            "spill_grid": list(plan.spill_grid),
            "family": plan.prior.family,
            "n_iterations": plan.mcmc.n_iterations,
            "n_burnin": plan.mcmc.n_burnin,
            "tau_true": plan.sim.tau_true,
            "T0": plan.sim.T0,
            "J": plan.sim.J,
        },
        "cells": [{
            "kappa_d": m.kappa_d, "spill_fraction": m.spill_fraction,
            "relative_bias": m.relative_bias, "coverage": m.coverage,
            "mean_interval_width": m.mean_interval_width, "rmse": m.rmse,
            "n_successful_replicates": m.n_successful_replicates,
            "n_failed_replicates": m.n_failed_replicates,
        } for m in metrics],
        "provenance": _provenance(cfg),
    })
    return 0


def _cmd_distance(cfg: RunConfig):
    panel = _load_fit_inputs(cfg)
    std_panel, _ = standardize(panel)
    distances = panel_distances(std_panel, kappa_d=cfg.kappa_d)
    if cfg.exclusion_fraction is not None:
        rho = cutoff_from_exclusion_fraction(distances.d_c, cfg.exclusion_fraction)
        excluded = 1 - assign_components(distances, rho)
    else:
        excluded = np.zeros(panel.n_donors, dtype=np.int8)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = [[lab, _fmt(distances.d_x[j]), _fmt(distances.d_p[j]), _fmt(distances.d_c[j]), int(excluded[j])]
            for j, lab in enumerate(panel.donor_labels)]
    _write_csv(out / "distances.csv", ["unit_id", "d_x", "d_p", "d_c", "excluded"], rows)
    return 0


def _cmd_summarize(cfg: RunConfig):
    """Recompute effect summaries from a draw dump's tau[t] rows."""
    tau_draws = {}
    with open(cfg.draws_path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or set(reader.fieldnames) != {"chain", "iteration", "parameter", "value"}:
            raise ValidationError(f"{cfg.draws_path}: header must be chain,iteration,parameter,value")
        for row in reader:
            name = row["parameter"]
            if name.startswith("tau[") and name.endswith("]"):
                t = int(name[4:-1])
                tau_draws.setdefault(t, []).append(float(row["value"]))
    if not tau_draws:
        raise ValidationError(f"{cfg.draws_path}: no tau[t] parameters found in dump")

    effect_list = []
    for t in sorted(tau_draws):
        tau = np.asarray(tau_draws[t])
        lo, hi = np.quantile(tau, [cfg.alpha / 2.0, 1.0 - cfg.alpha / 2.0])
        effect_list.append(EffectEstimate(
            period=t, mean=float(tau.mean()),
            sd=float(tau.std(ddof=1)) if tau.size > 1 else 0.0,
            lower=float(lo), upper=float(hi),
            prob_negative=float(np.mean(tau < 0.0)), alpha=float(cfg.alpha)))
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    _write_effects(out, effect_list, cfg)
    return 0


_DISPATCH = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "replicate": _cmd_replicate,
    "distance": _cmd_distance,
    "summarize": _cmd_summarize,
}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="spillsc",
        description="Bayesian synthetic control with distance-based shrinkage priors.")
    parser.add_argument("--version", action="version",
                        version=f"spillsc {__version__} (kernel: {BACKEND})")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
    args = parser.parse_args(argv)

    try:
        cfg = validate_config(args.config, args.command,
                              seed_override=args.seed, out_override=args.out)
        return _DISPATCH[args.command](cfg)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"ERROR: {v}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    except SpillscError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 1


def console_entry():
    raise SystemExit(main())
