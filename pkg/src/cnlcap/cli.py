"""Command line: ``cnlcap {solve,generate,compare,sweep}``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .drivers import ITER_CAP, METHOD_NAMES, TIME_CAP, run_method
from .exceptions import CnlError
from .experiments import COMPARE_COLUMNS, SWEEP_COLUMNS, SWEEP_GRIDS, run_compare, run_sweep
from .instances import GenConfig, generate
from .io import (append_rows, format_csv, read_cost_csv, read_instance,
                 result_row, write_instance)

EXIT_OK, EXIT_INPUT, EXIT_CAP = 0, 1, 2


def _add_gen_args(p, m=None, T=None, r=None, beta=0.05):
    p.add_argument("--m", type=int, default=m, required=m is None, help="candidate locations")
    p.add_argument("--T", type=int, default=T, required=T is None, help="customer types")
    p.add_argument("--r", type=int, default=r, required=r is None, help="facilities to open")
    p.add_argument("--N", type=int, default=5, help="nests")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", type=float, default=beta)
    p.add_argument("--alpha-comp", type=float, default=1.0, choices=(0.5, 1.0, 2.0))
    p.add_argument("--gamma", type=float, default=1.2)
    p.add_argument("--mu", type=float, default=0.5)
    p.add_argument("--omega", type=float, default=0.2)
    p.add_argument("--config", choices=("sharing", "separated"), default="sharing")
    p.add_argument("--competitors", type=int, default=None)


def _gen_config(args, **override) -> GenConfig:
    kw = dict(m=args.m, T=args.T, r=args.r, N=args.N, seed=args.seed, beta=args.beta,
              alpha_comp=args.alpha_comp, gamma=args.gamma, mu=args.mu, omega=args.omega,
              config=args.config, n_competitors=args.competitors)
    kw.update(override)
    return GenConfig(**kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cnlcap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance file")
    p.add_argument("--instance", required=True)
    p.add_argument("--method", choices=METHOD_NAMES, default="cp")
    p.add_argument("--r", type=int, default=None, help="override the budget")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--iter-limit", type=int, default=ITER_CAP)
    p.add_argument("--time-limit", type=float, default=TIME_CAP)
    p.add_argument("--seed", type=int, default=None, help="recorded in the results row")
    p.add_argument("--aggregation", default="per-type",
                   help="per-type, group:K or single")
    p.add_argument("--config", choices=("sharing", "separated"), default=None,
                   help="reject instances with a different configuration")
    p.add_argument("--out", default=None, help="results file to append to")
    p.add_argument("--format", choices=("csv", "json-lines"), default="csv")
    p.add_argument("--report", default=None, help="write the full JSON report here")

    p = sub.add_parser("generate", help="write random instance files")
    _add_gen_args(p)
    p.add_argument("--count", type=int, default=1, help="consecutive seeds to generate")
    p.add_argument("--costs", default=None, help="cost CSV (type,site_1..site_k)")
    p.add_argument("--out", required=True, help="file, or directory when --count > 1")

    p = sub.add_parser("compare", help="%%Loss of MNL and NL simplifications")
    p.add_argument("--instance", nargs="*", default=[], help="instance files")
    _add_gen_args(p, m=8, T=3, r=3)
    p.add_argument("--count", type=int, default=20, help="generated instances if none given")
    p.add_argument("--out", default=None)

    p = sub.add_parser("sweep", help="solve times across dissimilarity or overlap")
    p.add_argument("--param", choices=sorted(SWEEP_GRIDS), required=True)
    p.add_argument("--values", type=float, nargs="*", default=None)
    _add_gen_args(p, m=20, T=20, r=3, beta=0.01)
    p.add_argument("--seeds", type=int, default=10, help="instances per grid point")
    p.add_argument("--method", choices=("cp", "bc", "doa", "greedy"), default="cp")
    p.add_argument("--time-limit", type=float, default=TIME_CAP)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default=None)
    p.add_argument("--summary", default=None, help="write the trend summary JSON here")
    return parser


def cmd_solve(args) -> int:
    inst = read_instance(args.instance)
    if args.config and inst.config.value != args.config:
        raise CnlError(f"instance is {inst.config.value}, expected {args.config}")
    if args.r is not None:
        inst = inst.replace(r=args.r)
    rep = run_method(inst, args.method, args.eps, args.iter_limit, args.time_limit,
                     args.aggregation)
    doc = rep.to_dict()
    text = json.dumps(doc, sort_keys=True)
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n")
    if args.out:
        row = result_row(rep, inst, Path(args.instance).stem, args.seed)
        append_rows(args.out, [row], args.format)
    return EXIT_CAP if rep.termination in ("iteration-cap", "time-cap") else EXIT_OK


def cmd_generate(args) -> int:
    costs = read_cost_csv(args.costs) if args.costs else None
    out = Path(args.out)
    if args.count > 1:
        out.mkdir(parents=True, exist_ok=True)
    for k in range(args.count):
        seed = args.seed + k
        inst = generate(_gen_config(args, seed=seed, costs=costs))
        path = out / f"cnl_m{args.m}_T{args.T}_r{args.r}_s{seed}.json" if args.count > 1 else out
        digest = write_instance(inst, path)
        print(f"{seed} {digest} {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    if args.instance:
        named = [(Path(p).stem, read_instance(p)) for p in args.instance]
    else:
        named = [(f"cmp_s{args.seed + k}", generate(_gen_config(args, seed=args.seed + k)))
                 for k in range(args.count)]
    rows, means = run_compare(named)
    sys.stdout.write(format_csv(rows, COMPARE_COLUMNS))
    if args.out:
        append_rows(args.out, rows, "csv", COMPARE_COLUMNS)
    print(json.dumps({"mean_loss_pct": means}), file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    gen = dict(beta=args.beta, alpha_comp=args.alpha_comp, omega=args.omega,
               config=args.config, n_competitors=args.competitors)
    gen["gamma" if args.param == "mu" else "mu"] = args.gamma if args.param == "mu" else args.mu
    rows, summary = run_sweep(args.param, args.values, args.seeds, args.seed, args.m, args.T,
                              args.r, args.N, args.method, args.time_limit, args.jobs, **gen)
    sys.stdout.write(format_csv(rows, SWEEP_COLUMNS))
    if args.out:
        append_rows(args.out, rows, "csv", SWEEP_COLUMNS)
    text = json.dumps(summary, sort_keys=True)
    if args.summary:
        Path(args.summary).write_text(text + "\n")
    print(text, file=sys.stderr)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "generate": cmd_generate, "compare": cmd_compare,
            "sweep": cmd_sweep}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # usage errors are input errors; exit code 2 is reserved for cap hits
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (CnlError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
