"""
Command line entry point.

    ftopt run SPEC [--out DIR] [--seed N]
    ftopt builtin NAME [--emit-spec] [--out DIR] [--seed N]
    ftopt sweep SPEC --param P --values V1,V2,... [--out DIR] [--seed N] [--jobs J]
    ftopt schema

``SPEC`` is a YAML/JSON file or ``builtin:<name>``. On failure a JSON error
object is printed to stderr and the exit code names the failure class.
"""

from __future__ import annotations

import argparse
import json
import sys

from ftopt.config import SpecError, dump_spec, json_schema, load_spec
from ftopt.graph import GraphError
from ftopt.problems import ConvergenceError
from ftopt.runner import SWEEP_PARAMS, DivergenceError, run_experiment, sweep
from ftopt.scenarios import BUILTIN_NAMES, builtin_scenario
from ftopt.sim import ContractError

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_SPEC = 3
EXIT_GRAPH = 4
EXIT_DIVERGED = 5
EXIT_NUMERICAL = 6

_ERRORS = [
    (SpecError, EXIT_SPEC, "spec_error"),
    (ContractError, EXIT_SPEC, "spec_error"),
    (GraphError, EXIT_GRAPH, "graph_error"),
    (DivergenceError, EXIT_DIVERGED, "diverged"),
    (ConvergenceError, EXIT_NUMERICAL, "numerical_error"),
    (ArithmeticError, EXIT_NUMERICAL, "numerical_error"),
]


def _load(spec_arg, seed=None):
    if spec_arg.startswith("builtin:"):
        name = spec_arg.split(":", 1)[1]
        try:
            return builtin_scenario(name, seed)
        except KeyError as exc:
            raise SpecError(str(exc.args[0])) from exc
    return load_spec(spec_arg)


def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise SpecError(f"bad --values list {text!r}") from exc


def _print_summary(summary):
    print(json.dumps(summary, indent=2))


def cmd_run(args):
    spec = _load(args.spec)
    res = run_experiment(spec, args.out, args.seed)
    _print_summary(res.summary)


def cmd_builtin(args):
    if args.name not in BUILTIN_NAMES:
        raise SpecError(f"unknown builtin scenario {args.name!r}; known: {', '.join(BUILTIN_NAMES)}")
    spec = builtin_scenario(args.name, args.seed)
    if args.emit_spec:
        sys.stdout.write(dump_spec(spec))
        return
    res = run_experiment(spec, args.out)
    _print_summary(res.summary)


def cmd_sweep(args):
    spec = _load(args.spec)
    rows = sweep(spec, args.param, _values(args.values), args.out, args.seed, args.jobs)
    print(json.dumps(rows, indent=2))
    if all(r["status"] != "ok" for r in rows):
        return EXIT_ERROR


def cmd_schema(args):
    print(json.dumps(json_schema(), indent=2))


def build_parser():
    p = argparse.ArgumentParser(prog="ftopt", description=__doc__.split("\n\n")[0].strip())
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment spec")
    r.add_argument("spec")
    r.add_argument("--out", help="output directory (default: spec output.dir or out/<name>)")
    r.add_argument("--seed", type=int, help="override the spec seed")
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("builtin", help="run or print a builtin scenario")
    b.add_argument("name", help=", ".join(BUILTIN_NAMES))
    b.add_argument("--emit-spec", action="store_true", help="print the spec as YAML instead of running")
    b.add_argument("--out")
    b.add_argument("--seed", type=int, help="seed for the scenario's random draws and noise")
    b.set_defaults(func=cmd_builtin)

    s = sub.add_parser("sweep", help="one run per parameter value")
    s.add_argument("spec")
    s.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    s.add_argument("--values", required=True, help="comma separated list")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    sc = sub.add_parser("schema", help="print the experiment JSON schema")
    sc.set_defaults(func=cmd_schema)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except Exception as exc:
        for cls, code, kind in _ERRORS:
            if isinstance(exc, cls):
                break
        else:
            code, kind = EXIT_ERROR, "error"
        print(json.dumps({"error": kind, "exit_code": code, "message": str(exc)}), file=sys.stderr)
        return code
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
