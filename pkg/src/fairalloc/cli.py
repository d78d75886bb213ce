"""Command-line interface.

Exit codes: 0 on Optimal or a completed run, 2 on Infeasible, 3 on
LimitReached, 1 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .analysis import brute_force, group_allocation_summary, solution_path, tau_grid
from .bnb import Solution, Status, solve
from .estimation import fit_max_interference
from .io import (
    SchemaError,
    build_problem,
    fit_to_json,
    load_config,
    load_models,
    load_units,
    parse_tau,
    read_allocation,
    solution_to_json,
    summary_to_json,
    write_json,
    write_path,
)
from .milp import encode
from .model import evaluate_policy
from .synth import KINDS, generate_synthetic

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _status_code(status: Status) -> int:
    return {Status.OPTIMAL: EXIT_OK, Status.INFEASIBLE: EXIT_INFEASIBLE,
            Status.LIMIT_REACHED: EXIT_LIMIT}[status]


def _inputs(args):
    config = load_config(args.config)
    if getattr(args, "budget", None) is not None:
        config = type(config).from_dict({**config.to_dict(), "budget": args.budget})
    table = load_units(args.units, config)
    return config, table


def _problem(args, tau=math.inf):
    config, table = _inputs(args)
    pair = load_models(args.model, table)
    return config, table, build_problem(table, pair, config, tau)


def cmd_fit(args) -> int:
    config, table = _inputs(args)
    graph = table.build_graph(config)
    fit = fit_max_interference(table.fit_dataset(graph))
    write_json(args.out, fit_to_json(fit, table.groups))
    return EXIT_OK


def _solve_like(args, runner) -> int:
    config, _, problem = _problem(args, parse_tau(args.tau))
    if args.export_milp:
        Path(args.export_milp).write_text(encode(problem).to_text(), encoding="utf-8")
    sol: Solution = runner(problem, config)
    write_json(args.out, solution_to_json(sol, problem))
    return _status_code(sol.status)


def cmd_solve(args) -> int:
    log_fh = open(args.node_log, "w", encoding="utf-8", newline="\n") if args.node_log else None
    try:
        log = (lambda line: log_fh.write(line + "\n")) if log_fh else None
        return _solve_like(args, lambda p, c: solve(p, c.solver_config(), log))
    finally:
        if log_fh:
            log_fh.close()


def cmd_oracle(args) -> int:
    return _solve_like(args, lambda p, c: brute_force(p))


def cmd_path(args) -> int:
    config, _, problem = _problem(args)
    if args.taus:
        taus = [parse_tau(t) for t in args.taus.split(",")]
    elif args.grid:
        taus = [*tau_grid(problem, args.grid).tolist(), math.inf]
    else:
        taus = list(config.tau_list)
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise UsageError("taus must be strictly increasing")
    path = solution_path(problem, taus, config.solver_config())
    write_path(args.out, path, problem)
    return EXIT_OK


def cmd_synth(args) -> int:
    params = json.loads(args.params) if args.params else {}
    if not isinstance(params, dict):
        raise UsageError("--params must be a JSON object")
    inst = generate_synthetic(args.kind, params, args.seed)
    inst.write(args.out)
    return EXIT_OK


def cmd_summarize(args) -> int:
    _, _, problem = _problem(args)
    data = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    z = read_allocation(data, problem)
    tau = parse_tau(data.get("tau", "inf"))
    problem = problem.with_tau(tau)
    report = evaluate_policy(problem, z)
    fake = Solution(Status.OPTIMAL, z, report.total, report.total, report.gaps, 0, tau,
                    problem.budget)
    out = summary_to_json(group_allocation_summary(problem, fake))
    out["feasible"] = bool(report.feasible)
    write_json(args.out, out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fairalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, model=True):
        p.add_argument("--units", required=True, help="units CSV")
        if model:
            p.add_argument("--model", required=True, help="model JSON")
        p.add_argument("--config", help="run config (JSON or YAML)")
        p.add_argument("--budget", type=int, help="override the config budget")
        p.add_argument("--out", required=True, help="output file or directory")

    p = sub.add_parser("fit", help="fit max-interference parameters")
    common(p, model=False)
    p.set_defaults(func=cmd_fit)

    for name, func, help_ in (("solve", cmd_solve, "branch-and-bound solve"),
                              ("oracle", cmd_oracle, "brute-force solve")):
        p = sub.add_parser(name, help=help_)
        common(p)
        p.add_argument("--tau", default="inf", help="privilege bound or 'inf'")
        p.add_argument("--export-milp", help="write the program in text form")
        if name == "solve":
            p.add_argument("--node-log", help="write one line per node")
        p.set_defaults(func=func)

    p = sub.add_parser("path", help="solve along a list of tau values")
    common(p)
    p.add_argument("--taus", help="comma separated increasing taus ('inf' allowed)")
    p.add_argument("--grid", type=int, help="geometric grid size (adds an 'inf' point)")
    p.set_defaults(func=cmd_path)

    p = sub.add_parser("synth", help="generate a synthetic instance")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="JSON object of generator overrides")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("summarize", help="per-group summary of a solution JSON")
    common(p)
    p.add_argument("--solution", required=True)
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, SchemaError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"fairalloc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
