"""Config-driven experiments: competitive tables plus property suites."""
from __future__ import annotations

import datetime
import json
import os

from ..core import check_metric_identities
from ..policies import POLICIES
from ..verify import competitive_table
from .generate import DEFAULTS, KINDS, GeneratorSpec, generate
from .io import results_csv
from .suites import SUITES, global_tolerance, run_suite

CONFIG_FIELDS = {"instances", "policies", "speeds", "checks", "seed", "dp_cap"}
INSTANCE_FIELDS = {"kind", "n", "seeds", "params"}


class ConfigError(ValueError):
    pass


def _check_config(cfg):
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(cfg) - CONFIG_FIELDS
    if extra:
        raise ConfigError(f"unknown config fields {sorted(extra)}")
    for k, spec in enumerate(cfg.get("instances", [])):
        if not isinstance(spec, dict):
            raise ConfigError(f"instances[{k}] must be an object")
        extra = set(spec) - INSTANCE_FIELDS
        if extra:
            raise ConfigError(f"instances[{k}]: unknown fields {sorted(extra)}")
        if spec.get("kind") not in KINDS:
            raise ConfigError(f"instances[{k}]: unknown kind {spec.get('kind')!r}")
        bad = set(spec.get("params", {})) - set(DEFAULTS)
        if bad:
            raise ConfigError(f"instances[{k}]: unknown params {sorted(bad)}")
    for p in cfg.get("policies", []):
        if p not in POLICIES:
            raise ConfigError(f"unknown policy {p!r}; choose from {sorted(POLICIES)}")
    for s in cfg.get("speeds", [1.0]):
        if not isinstance(s, (int, float)) or s < 1:
            raise ConfigError(f"speeds must be numbers >= 1, got {s!r}")
    for c in cfg.get("checks", []):
        if c not in SUITES:
            raise ConfigError(f"unknown check suite {c!r}; choose from {list(SUITES)}")
    if cfg.get("instances") and not cfg.get("policies"):
        raise ConfigError("instances given without policies")


def load_config(path):
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    _check_config(cfg)
    return cfg


def _compatible(policy, inst):
    from ..policies import make_policy
    try:
        make_policy(policy).reset(inst, 1.0)
    except ValueError:
        return False
    if policy == "gd_integral":
        kind = inst.env.kind
        if kind == "unrelated":
            return bool((inst.weights == inst.weights[0]).all())
        return kind == "single_machine"
    return True


def run_experiment(cfg, out_dir=None, stamp=None):
    """Run every configured cell and suite.

    Returns (status, rows, reports): status is 0 when no asserted property
    is violated and 1 otherwise. With out_dir, writes results.csv (first line
    a timestamp comment) and reports.json.
    """
    _check_config(cfg)
    tol = global_tolerance()
    speeds = [float(s) for s in cfg.get("speeds", [1.0])]
    rows, reports, skipped = [], [], []
    ok = True
    for spec in cfg.get("instances", []):
        for seed in spec.get("seeds", [0]):
            gs = GeneratorSpec(spec["kind"], int(spec["n"]), int(seed),
                               {k: tuple(v) if isinstance(v, list) else v
                                for k, v in spec.get("params", {}).items()})
            inst = generate(gs)
            iid = f"{gs.kind}-n{gs.n}-s{gs.seed}"
            pols = [p for p in cfg["policies"] if _compatible(p, inst)]
            skipped += [{"instance_id": iid, "policy": p} for p in cfg["policies"] if p not in pols]
            errs = []

            def on_trace(inst_, trace, iid=iid, errs=errs):
                for e in check_metric_identities(trace, inst_):
                    errs.append(f"{iid} {trace.meta.get('policy')}: {e}")
            new = competitive_table([(iid, inst)], pols, speeds, cfg.get("dp_cap"), on_trace)
            for r in new:
                # fractional GD at speed 1 + eps is within (2 + eps) / eps of OPT
                if r["policy"] in ("gd", "gd_fractional") and r["speed"] > 1:
                    eps = r["speed"] - 1
                    bound = (2 + eps) / eps
                    if r["ratio_fractional"] > bound * (1 + tol):
                        errs.append(f"{iid} gd speed {r['speed']}: ratio {r['ratio_fractional']} > {bound}")
            rows += new
            if errs:
                ok = False
                reports.append({"suite": "experiment", "check": iid, "expect": "pass", "passed": False,
                                "violations": len(errs), "witnesses": errs[:5]})
    for name in cfg.get("checks", []):
        good, reps = run_suite(name, int(cfg.get("seed", 0)), tol)
        ok &= good
        reports += reps
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        stamp = stamp or datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        if rows or cfg.get("instances"):
            with open(os.path.join(out_dir, "results.csv"), "w") as fh:
                fh.write(results_csv(rows, stamp))
        with open(os.path.join(out_dir, "reports.json"), "w") as fh:
            json.dump({"ok": ok, "reports": reports, "skipped": skipped}, fh, indent=1, sort_keys=True,
                      default=float)
            fh.write("\n")
    return (0 if ok else 1), rows, reports
