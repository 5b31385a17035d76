"""Command-line front end.

Exit status: 0 on success, 1 on input errors (one ``ERROR:`` line on stderr),
2 when a mathematical check fails (step-optimality violation, failed
assumption, non-convergence).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import io
from .convergence import default_grid, geometric_grid, sweep
from .equilibrium import (
    DEFAULT_ENUM_CAP,
    precommitment_gap,
    solve_eps,
    solve_limit,
    verify_step_optimality,
)
from .examples import BUILTINS, builtin
from .model import KernelError, ModelError, validate_assumptions
from .operators import LIMIT, TIE_TOL, trace_ops

EXIT_OK, EXIT_INPUT, EXIT_CHECK = 0, 1, 2


class InputError(Exception):
    pass


def _eps_arg(text: str):
    if text == LIMIT:
        return LIMIT
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"eps must be a positive number or 'limit', got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("eps must be positive")
    return v


def _load(source: str):
    path = Path(source)
    if path.exists():
        return io.load_model(path)
    if source in BUILTINS:
        return builtin(source)
    raise InputError(f"model {source!r} is neither a readable file nor a builtin example "
                     f"({', '.join(BUILTINS)})")


def _grid(args, model):
    if getattr(args, "grid", None):
        return [float(e) for e in args.grid]
    if getattr(args, "grid_geometric", None):
        emax, k = args.grid_geometric
        return geometric_grid(float(emax), int(k))
    return default_grid(model)


def _out(args, name: str) -> Path:
    return Path(args.output_dir) / name


def _with_trace(args, fn):
    if not getattr(args, "trace_ops", False):
        return fn()
    records = []
    with trace_ops(records.append):
        result = fn()
    text = "".join(json.dumps(r, default=str) + "\n" for r in records)
    io.write_atomic(_out(args, "ops_trace.jsonl"), text)
    return result


def cmd_validate(args) -> int:
    model = _load(args.model)
    grid = [args.eps] if args.eps is not None else _grid(args, model)
    if LIMIT in grid:
        raise InputError("validate needs numeric eps values")
    report = validate_assumptions(model, grid)
    io.write_atomic(_out(args, "validation.json"), io.dumps(report.to_dict()))
    print(f"validate {model.name}: {'pass' if report.passed else 'FAIL'}")
    return EXIT_OK if report.passed else EXIT_CHECK


def _solve(model, eps, tie_tol):
    return solve_limit(model, tie_tol) if eps == LIMIT else solve_eps(model, eps, tie_tol)


def cmd_solve(args) -> int:
    model = _load(args.model)
    sol = _with_trace(args, lambda: _solve(model, args.eps, args.tie_tol))
    io.write_atomic(_out(args, "solution.json"), io.dumps(io.solution_to_dict(model, sol)))
    io.write_atomic(_out(args, "theta.csv"), io.theta_csv(model, sol))
    print(f"solve {model.name} eps={args.eps}: {sol.tie_count} ties")
    return EXIT_OK


def cmd_verify(args) -> int:
    model = _load(args.model)
    try:
        doc = json.loads(Path(args.solution).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read solution {args.solution}: {e}")
    sol = io.solution_from_dict(model, doc)
    eps = args.eps if args.eps is not None else sol.eps
    report = verify_step_optimality(model, eps, sol)
    io.write_atomic(_out(args, "deviations.json"), io.dumps(report.to_dict()))
    io.write_atomic(_out(args, "deviations.csv"),
                    io.csv_text(report.rows, ["t", "x", "u", "theta_tt", "j_dev", "slack", "chosen"]))
    print(f"verify {model.name} eps={eps}: {len(report.violations)} violations, "
          f"worst {report.worst_violation:.3g}")
    return EXIT_OK if report.passed else EXIT_CHECK


def cmd_sweep(args) -> int:
    model = _load(args.model)
    grid = _grid(args, model)
    res = sweep(model, grid, args.tie_tol)
    if args.tolerance is not None:
        res.tolerance = args.tolerance
    io.write_atomic(_out(args, "sweep.json"), io.dumps(res.to_dict()))
    cols = ["eps", "tau", "t", "w_distance", "policy_agreement", "tie_count"]
    io.write_atomic(_out(args, "sweep.csv"), io.csv_text(list(res.rows()), cols))
    T = model.horizon
    keys = [f"tau{tau}_t{t}" for tau in range(1, T + 1) for t in range(1, T + 1)]
    plot = [dict(eps=e, **{k: float(res.distances[i].ravel()[j]) for j, k in enumerate(keys)})
            for i, e in enumerate(res.grid)]
    io.write_atomic(_out(args, "sweep_plot.csv"), io.csv_text(plot, ["eps"] + keys))
    print(f"sweep {model.name}: final distance {res.final_distance():.3g}, "
          f"{'pass' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_precommit(args) -> int:
    model = _load(args.model)
    x0 = None
    if args.initial_state is not None:
        x0 = int(args.initial_state)
    try:
        rep = precommitment_gap(model, args.eps, x0, cap=args.enum_cap, tie_tol=args.tie_tol)
    except ValueError as e:
        raise InputError(str(e))
    io.write_atomic(_out(args, "gap.json"), io.dumps(rep.to_dict()))
    print(f"precommit {model.name} eps={args.eps} x0={rep.initial_state}: "
          f"value gap {rep.value_gap:.6g}")
    return EXIT_OK


def cmd_example(args) -> int:
    if args.name not in BUILTINS:
        raise InputError(f"unknown example {args.name!r}; choose from {', '.join(BUILTINS)}")
    model = builtin(args.name)
    path = _out(args, f"{args.name}.json")
    io.save_model(model, path)
    print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tirs", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="model JSON file or builtin example name")
        sp.add_argument("--output-dir", default=".", help="directory for emitted files")
        sp.add_argument("--tie-tol", type=float, default=TIE_TOL)
        sp.add_argument("--trace-ops", action="store_true",
                        help="dump operator evaluations to ops_trace.jsonl")

    def grid_opts(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--grid", type=float, nargs="+", metavar="EPS")
        g.add_argument("--grid-geometric", nargs=2, metavar=("EPS_MAX", "POINTS"))
        return g

    sp = sub.add_parser("validate", help="check standing assumptions on an eps grid")
    common(sp)
    g = grid_opts(sp)
    g.add_argument("--eps", type=float)
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("solve", help="compute an equilibrium")
    common(sp)
    sp.add_argument("--eps", type=_eps_arg, required=True)
    sp.set_defaults(fn=cmd_solve)

    sp = sub.add_parser("verify", help="check step-optimality of a solution file")
    common(sp)
    sp.add_argument("--solution", required=True)
    sp.add_argument("--eps", type=_eps_arg)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("sweep", help="eps -> 0 convergence sweep")
    common(sp)
    grid_opts(sp)
    sp.add_argument("--tolerance", type=float, help="override the model's final-distance tolerance")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("precommit", help="compare with the best precommitted policy")
    common(sp)
    sp.add_argument("--eps", type=_eps_arg, default=LIMIT)
    sp.add_argument("--initial-state")
    sp.add_argument("--enum-cap", type=int, default=DEFAULT_ENUM_CAP)
    sp.set_defaults(fn=cmd_precommit)

    sp = sub.add_parser("example", help="write a builtin model as JSON")
    sp.add_argument("name")
    common(sp, model=False)
    sp.set_defaults(fn=cmd_example)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT if e.code else EXIT_OK
    try:
        return args.fn(args)
    except (InputError, ModelError, KernelError, OSError, KeyError, ValueError) as e:
        msg = str(e).replace("\n", " ")
        print(f"ERROR: {type(e).__name__}: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
