"""Config-driven scenario runner.

Usage::

    python -m contagion_reinsurance {simulate,phi,optimize,compare,check} \\
        --config scenario.ini --out results/ [--workers N] [--seed S]

Exit status is 0 on success, 1 on configuration or validation errors and 2
on numerical failures.  Every CSV starts with a ``# config_sha256=...``
comment so artifacts can be traced back to their scenario.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from .analysis import compare_policies, monotonicity_probe, strana_check
from .contracts import (
    EXCESS_OF_LOSS,
    LIMITED_XL,
    PROPORTIONAL,
    Pricing,
    PremiumPrinciple,
    RetentionContract,
)
from .errors import ConfigError, NumericalError, ReinsuranceError
from .model import MarkDistribution, ModelParams, SelfExcitation
from .optimizer import FOC_TOL, MCConfig, cox_optimal, cox_table, policy_iteration
from .policies import ConstantPolicy, TimeCurvePolicy
from .process import pooled_interarrivals, simulate_paths, write_path_csv
from .valuation import estimate_phi_table

COMMANDS = ("simulate", "phi", "optimize", "compare", "check")

SCHEMA = {
    "model": {
        "alpha": float, "beta": float, "lambda0": float, "rho": float, "r": float,
        "eta": float, "horizon": float, "claim_dist": str, "ext_dist": str,
        "self_excitation": str, "unsafe_moments": bool,
    },
    "contract": {"kind": str, "beta_m": float},
    "premium": {"kind": str, "theta_i": float, "theta_r": float, "eta_i": float, "eta_r": float},
    "grids": {
        "t_points": int, "lambda_min": float, "lambda_max": float, "lambda_points": int,
        "n_paths": int, "seed": int,
    },
    "run": {
        "simulate_paths": int, "dump_paths": int, "policy": str, "tol": float,
        "max_iter": int, "probe_paths": int, "probe_points": int,
    },
}
REQUIRED = {
    "model": ("alpha", "beta", "lambda0", "rho", "r", "eta", "horizon", "claim_dist"),
    "contract": ("kind",),
    "premium": ("kind",),
    "grids": ("t_points", "lambda_min", "lambda_max", "lambda_points", "n_paths"),
}
RUN_DEFAULTS = {
    "simulate_paths": 1000, "dump_paths": 5, "policy": "cox", "tol": 1e-4, "max_iter": 50,
    "probe_paths": 20000, "probe_points": 5,
}


@dataclass
class Scenario:
    params: ModelParams
    contract: RetentionContract
    principle: PremiumPrinciple
    t_grid: np.ndarray
    lam_grid: np.ndarray
    n_paths: int
    seed: int
    run: dict
    sha256: str

    @property
    def pricing(self) -> Pricing:
        return Pricing(self.principle, self.contract, self.params.claim_dist)


def _convert(section, key, raw, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        return typ(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {typ.__name__}") from None


def load_config(path, seed_override: int | None = None) -> Scenario:
    """Parse and validate a scenario file; every error names the offending key."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text.decode("utf-8"))
    except (configparser.Error, UnicodeDecodeError) as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    vals: dict[str, dict] = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        vals[section] = {}
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"[{section}] unknown key {key!r}")
            vals[section][key] = _convert(section, key, raw, SCHEMA[section][key])
    for section, keys in REQUIRED.items():
        for key in keys:
            if key not in vals.get(section, {}):
                raise ConfigError(f"[{section}] missing required key {key!r}")

    m = vals["model"]
    claim = _parse(MarkDistribution.parse, m["claim_dist"], "model", "claim_dist")
    ext = _parse(MarkDistribution.parse, m.get("ext_dist", "point_mass 0"), "model", "ext_dist")
    ell = _parse(SelfExcitation.parse, m.get("self_excitation", "zero"), "model", "self_excitation")
    params = _parse(
        lambda _: ModelParams(
            m["alpha"], m["beta"], m["lambda0"], m["rho"], m["r"], m["eta"], m["horizon"],
            claim, ext, ell, m.get("unsafe_moments", False),
        ),
        None, "model", "parameters",
    )

    c = vals["contract"]
    kind = c["kind"].strip().lower()
    if kind == PROPORTIONAL:
        contract = RetentionContract.proportional()
    elif kind == EXCESS_OF_LOSS:
        contract = _parse(RetentionContract.excess_of_loss, claim, "contract", "kind")
    elif kind == LIMITED_XL:
        if "beta_m" not in c:
            raise ConfigError("[contract] limited_xl needs beta_m")
        contract = _parse(lambda b: RetentionContract.limited_xl(b, claim), c["beta_m"], "contract", "beta_m")
    else:
        raise ConfigError(f"[contract] kind: unknown contract {c['kind']!r}")

    pm = vals["premium"]
    principle = _parse(
        lambda _: PremiumPrinciple(
            pm["kind"].strip().upper(), pm.get("theta_i", 0.0), pm.get("theta_r", 0.0),
            pm.get("eta_i", 0.0), pm.get("eta_r", 0.0),
        ),
        None, "premium", "kind",
    )

    g = vals["grids"]
    if g["t_points"] < 2 or g["lambda_points"] < 2:
        raise ConfigError("[grids] t_points and lambda_points must be >= 2")
    if not 0 < g["lambda_min"] < g["lambda_max"]:
        raise ConfigError("[grids] need 0 < lambda_min < lambda_max")
    if g["n_paths"] < 2:
        raise ConfigError("[grids] n_paths must be >= 2")
    seed = seed_override if seed_override is not None else g.get("seed", 0)
    if seed < 0:
        raise ConfigError("[grids] seed must be nonnegative")
    run = dict(RUN_DEFAULTS)
    run.update(vals.get("run", {}))
    return Scenario(
        params, contract, principle,
        np.linspace(0.0, params.horizon, g["t_points"]),
        np.linspace(g["lambda_min"], g["lambda_max"], g["lambda_points"]),
        g["n_paths"], int(seed), run, hashlib.sha256(text).hexdigest(),
    )


def _parse(fn, value, section, key):
    try:
        return fn(value)
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from None


def _fixed_policy(sc: Scenario):
    spec = sc.run["policy"].strip().lower()
    if spec == "cox":
        fine = np.linspace(0.0, sc.params.horizon, 201)
        return TimeCurvePolicy.from_function(
            lambda t: cox_optimal(t, sc.contract, sc.principle, sc.params), fine
        )
    try:
        u = float(spec)
    except ValueError:
        raise ConfigError(f"[run] policy: expected 'cox' or a number, got {spec!r}") from None
    pol = ConstantPolicy(u)
    try:
        pol.check(sc.contract)
    except ReinsuranceError as exc:
        raise ConfigError(f"[run] policy: {exc}") from None
    return pol


def _header(sc: Scenario, command: str) -> str:
    return f"config_sha256={sc.sha256} seed={sc.seed} command={command}"


def _write_json(dest: Path, obj) -> None:
    dest.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_simulate(sc: Scenario, out: Path, workers: int) -> dict:
    n = sc.run["simulate_paths"]
    paths = simulate_paths(sc.params, sc.seed, n)
    for path in paths[: sc.run["dump_paths"]]:
        write_path_csv(path, out / f"path_{path.index:05d}.csv", _header(sc, "simulate"))
    gaps = pooled_interarrivals(paths)
    summary = {"n_paths": n, "n_claims": int(gaps.size)}
    if gaps.size:
        ks = stats.kstest(gaps, "expon")
        summary.update(ks_statistic=float(ks.statistic), ks_pvalue=float(ks.pvalue))
    return summary


def cmd_phi(sc: Scenario, out: Path, workers: int) -> dict:
    policy = _fixed_policy(sc)
    table = estimate_phi_table(
        sc.params, sc.t_grid, sc.lam_grid, policy, sc.pricing, sc.n_paths, sc.seed, workers
    )
    table.write_csv(out / "phi.csv", _header(sc, "phi"))
    return {"phi_min": float(table.phi.min()), "phi_max": float(table.phi.max())}


def _optimize(sc: Scenario, workers: int, params=None):
    mc = MCConfig(sc.n_paths, sc.seed, sc.run["max_iter"], sc.run["tol"], workers)
    log = lambda row: print(json.dumps(row), file=sys.stderr)
    return policy_iteration(
        params or sc.params, sc.contract, sc.principle, sc.t_grid, sc.lam_grid, mc, log
    )


def cmd_optimize(sc: Scenario, out: Path, workers: int) -> dict:
    res = _optimize(sc, workers)
    res.policy.write_csv(out / "policy.csv", _header(sc, "optimize"))
    res.phi.write_csv(out / "phi.csv", _header(sc, "optimize"))
    res.write_diagnostics(out / "diagnostics.jsonl")
    return {"converged": res.converged, "iterations": len(res.diagnostics)}


def _precondition(sc: Scenario, policy) -> tuple[str, dict]:
    """Monotonicity of phi in lambda, by the analytic margin or coupled probes."""
    info = {}
    cox_policy = _fixed_policy(Scenario(**{**sc.__dict__, "run": {**sc.run, "policy": "cox"}}))
    rep = strana_check(sc.params, cox_policy, sc.principle, sc.contract, sc.t_grid[:-1])
    info["strana_min_margin"] = rep.min_margin
    k = sc.run["probe_points"]
    probe = monotonicity_probe(
        sc.params, policy, sc.contract, sc.principle,
        np.linspace(0.0, sc.params.horizon, k + 1)[:-1],
        np.linspace(sc.lam_grid[0], sc.lam_grid[-1] / 2, k),
        sc.run["probe_paths"], sc.seed + 1,
    )
    info["probe_min_z"] = float(np.min(probe.diff / np.where(probe.stderr > 0, probe.stderr, 1)))
    if rep.passed:
        return "verified-strana", info
    if probe.passed:
        return "verified-coupled", info
    return "unverified-precondition", info


def cmd_compare(sc: Scenario, out: Path, workers: int) -> dict:
    if sc.principle.kind != "EVP":
        raise ConfigError("[premium] kind: the comparison is stated under EVP only")
    res = _optimize(sc, workers)
    twin = sc.params.cox_twin()
    cox = cox_table(twin, sc.contract, sc.principle, sc.t_grid, sc.lam_grid)
    label, info = _precondition(sc, res.policy)
    report = compare_policies(res.policy, cox, 1e-4 + FOC_TOL, label)
    report.write_csv(out / "comparison.csv", _header(sc, "compare"))
    res.policy.write_csv(out / "policy.csv", _header(sc, "compare"))
    return {
        "violations": report.violations, "max_excess": report.max_excess,
        "precondition": label, "converged": res.converged, **info,
    }


def cmd_check(sc: Scenario, out: Path, workers: int) -> dict:
    policy = _fixed_policy(sc)
    summary = {}
    if getattr(policy, "deterministic", False):
        rep = strana_check(sc.params, policy, sc.principle, sc.contract, sc.t_grid)
        rep.write_csv(out / "strana.csv", _header(sc, "check"))
        summary.update(strana_pass=rep.passed, strana_min_margin=rep.min_margin)
    k = sc.run["probe_points"]
    probe = monotonicity_probe(
        sc.params, policy, sc.contract, sc.principle,
        np.linspace(0.0, sc.params.horizon, k + 1)[:-1],
        np.linspace(sc.lam_grid[0], sc.lam_grid[-1] / 2, k),
        sc.run["probe_paths"], sc.seed,
    )
    with open(out / "probes.csv", "w") as fh:
        fh.write(f"# {_header(sc, 'check')}\n")
        fh.write("t,lambda1,lambda2,diff,stderr\n")
        for a, t in enumerate(probe.t_points):
            for b, lam in enumerate(probe.lam_points):
                fh.write("%.17g,%.17g,%.17g,%.17g,%.17g\n"
                         % (t, lam, 2 * lam, probe.diff[a, b], probe.stderr[a, b]))
    summary["probes_pass"] = probe.passed
    return summary


HANDLERS = {
    "simulate": cmd_simulate, "phi": cmd_phi, "optimize": cmd_optimize,
    "compare": cmd_compare, "check": cmd_check,
}


def run(command: str, config_path, out_dir, workers: int | None = None, seed: int | None = None) -> int:
    """Run one command; returns the process exit status."""
    try:
        if command not in HANDLERS:
            raise ConfigError(f"unknown command {command!r}")
        sc = load_config(config_path, seed)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[command](sc, out, workers or os.cpu_count() or 1)
        summary = {"command": command, "config_sha256": sc.sha256, "seed": sc.seed, **summary}
        _write_json(out / "summary.json", summary)
        print(json.dumps(summary, sort_keys=True))
        return 0
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2
    except ReinsuranceError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="contagion_reinsurance", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default=os.environ.get("CONTAGION_OUT", "out"))
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("--seed", type=int, default=None)
    a = ap.parse_args(argv)
    return run(a.command, a.config, a.out, a.workers, a.seed)
