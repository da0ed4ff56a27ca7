"""Command line: gen, simulate, opt, verify, bench.

Exit codes: 0 ok, 1 property violation, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import sys

from ..core import check_metric_identities, metrics
from ..policies import POLICIES, make_policy
from ..sim import InfeasibleRates, SimConfig, offline_opt_fractional, offline_opt_integral_dp, simulate
from .experiment import ConfigError, load_config, run_experiment
from .generate import KINDS, GeneratorSpec, generate
from .io import InstanceFormatError, load_instance, save_instance, save_trace
from .suites import SUITES, run_suite

OK, VIOLATION, USAGE = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="gdflow", description="Gradient descent on the residual optimum.")
    sub = p.add_subparsers(dest="cmd", required=True)
    g = sub.add_parser("gen", help="generate a seeded instance")
    g.add_argument("--kind", required=True, choices=KINDS)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    s = sub.add_parser("simulate", help="run a policy on an instance")
    s.add_argument("--instance", required=True)
    s.add_argument("--policy", required=True, choices=sorted(POLICIES))
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--trace")
    o = sub.add_parser("opt", help="offline optimum")
    o.add_argument("--instance", required=True)
    o.add_argument("--mode", choices=("fractional", "dp"), default="fractional")
    v = sub.add_parser("verify", help="run a seeded property suite")
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--seed", type=int, default=0)
    b = sub.add_parser("bench", help="run an experiment config")
    b.add_argument("--config", required=True)
    b.add_argument("-o", "--output", required=True)
    return p


def _emit(obj):
    print(json.dumps(obj, indent=1, default=float))


def _run(args):
    if args.cmd == "gen":
        save_instance(generate(GeneratorSpec(args.kind, args.n, args.seed)), args.output)
        return OK
    if args.cmd == "simulate":
        inst = load_instance(args.instance)
        try:
            trace, _ = simulate(inst, make_policy(args.policy), SimConfig(speed=args.speed))
        except InfeasibleRates as exc:
            print(f"error: {exc}", file=sys.stderr)
            return VIOLATION
        m = metrics(trace, inst)
        if args.trace:
            save_trace(trace, args.trace)
        errs = check_metric_identities(trace, inst)
        _emit({"policy": args.policy, "speed": args.speed, "integral_flow": m.integral_weighted_flow,
               "fractional_flow": m.fractional_weighted_flow, "completions": trace.completions.tolist(),
               "identity_errors": errs})
        return VIOLATION if errs else OK
    if args.cmd == "opt":
        inst = load_instance(args.instance)
        if args.mode == "dp":
            _emit({"mode": "dp", "value": offline_opt_integral_dp(inst)})
        else:
            _emit({"mode": "fractional", "value": offline_opt_fractional(inst)[0]})
        return OK
    if args.cmd == "verify":
        ok, reps = run_suite(args.suite, args.seed)
        _emit({"suite": args.suite, "seed": args.seed, "ok": ok, "reports": reps})
        return OK if ok else VIOLATION
    status, rows, reps = run_experiment(load_config(args.config), args.output)
    print(f"{len(rows)} rows, {sum(not r['passed'] for r in reps)} failed reports -> {args.output}")
    return status


def main(argv=None):
    args = _parser().parse_args(argv)  # argparse exits with 2 on usage errors
    try:
        return _run(args)
    except (InstanceFormatError, ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
