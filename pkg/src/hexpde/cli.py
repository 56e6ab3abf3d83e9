"""``hexpde`` command line: mesh, solve, estimate, amg-stats, convergence, export."""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import amg, io
from .assembly import export_matrix_market
from .estimation import STRATEGIES, EstimationError, effectivity, estimate
from .mesh import aspect_ratios, build_mesh, hole_aspect_ratio
from .problems import (
    PROBLEMS, SOLVERS, builtin_problem, convergence_study, error_ratios, galerkin_error, solve_problem,
)


class UsageError(ValueError):
    pass


class SolverDivergence(RuntimeError):
    pass


def _degree(s):
    s = str(s).lower()
    if s in ("1", "q1"):
        return 1
    if s in ("2", "q2"):
        return 2
    raise argparse.ArgumentTypeError(f"degree must be q1 or q2, got {s!r}")


def _onoff(s):
    s = str(s).lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")


def _strategies(s):
    if isinstance(s, list):
        return s
    out = [t.strip().lower() for t in str(s).split(",") if t.strip()]
    for t in out:
        if t not in [x.value for x in STRATEGIES]:
            raise argparse.ArgumentTypeError(f"unknown strategy {t!r}")
    return out


def _problem_args(p, solver=True):
    p.add_argument("--problem", "--domain", dest="problem", choices=PROBLEMS, default="cube")
    p.add_argument("--n", type=int, default=8, help="elements per axis (cube, staircase)")
    p.add_argument("--level", type=int, default=2, help="borehole refinement level")
    p.add_argument("--eps", type=float, default=0.01, help="borehole half width")
    p.add_argument("--keep-hole-nodes", action="store_true")
    p.add_argument("--degree", type=_degree, default=1)
    p.add_argument("--large", action="store_true", help="allow more than 3e6 unknowns")
    if solver:
        p.add_argument("--solver", choices=SOLVERS, default="direct")
        p.add_argument("--tol", type=float, default=1e-10)
        p.add_argument("--maxit", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="hexpde", description="Poisson FEM on hexahedral meshes")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults (flags win)")
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--seed", type=int, default=0)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh", parents=[common], help="build and save a mesh")
    _problem_args(p, solver=False)
    p.add_argument("--out", help="binary mesh file")
    p.add_argument("--text", help="plain-text mesh dump")

    p = sub.add_parser("solve", parents=[common], help="assemble and solve")
    _problem_args(p)
    p.add_argument("--estimate", type=_strategies, default=None, help="comma list of strategies")
    p.add_argument("--boundary-correction", type=_onoff, nargs="?", const=True, default=False)
    p.add_argument("--residuals", help="CSV of the residual history")
    p.add_argument("--export-mm", help="Matrix Market file of the system matrix")
    p.add_argument("--vtk", help="VTK file with the solution")

    p = sub.add_parser("estimate", parents=[common], help="a posteriori error estimate")
    _problem_args(p)
    p.add_argument("--strategy", type=_strategies, default=["q2rh"])
    p.add_argument("--boundary-correction", type=_onoff, nargs="?", const=True, default=False)
    p.add_argument("--ref-energy", type=float, default=None)
    p.add_argument("--vtk", help="VTK file with solution and eta_e")
    p.add_argument("--csv", help="per-element indicators")

    p = sub.add_parser("amg-stats", parents=[common], help="AMG hierarchy diagnostics")
    _problem_args(p, solver=False)
    p.add_argument("--theta", type=float, default=0.25)
    p.add_argument("--second-pass", choices=("coupled", "strong", "none"), default="coupled")
    p.add_argument("--csv")

    p = sub.add_parser("convergence", parents=[common], help="refinement study")
    _problem_args(p)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--estimate", type=_strategies, default=None)
    p.add_argument("--boundary-correction", type=_onoff, nargs="?", const=True, default=False)
    p.add_argument("--csv")

    p = sub.add_parser("export", parents=[common], help="VTK and line-sample export")
    _problem_args(p)
    p.add_argument("--vtk")
    p.add_argument("--line", choices=("x", "y", "z"), default=None)
    p.add_argument("--at", default="0,0", help="the two fixed coordinates, e.g. 0.5,0")
    p.add_argument("--samples", type=int, default=101)
    p.add_argument("--csv")
    return top


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config) as fh:
            cfg = json.load(fh)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def _set_threads(n):
    n = n or os.environ.get("HEXPDE_THREADS")
    if not n:
        return
    import numba

    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


def _size(args):
    return args.level if args.problem == "borehole" else args.n


def _solve(args):
    sol = solve_problem(args.problem, _size(args), args.degree, args.solver, args.tol, args.maxit,
                        large=args.large, eps=args.eps, keep_hole_nodes=args.keep_hole_nodes)
    if not sol.report.converged:
        raise SolverDivergence(f"{args.solver} did not converge in {sol.report.iterations} iterations "
                               f"(relres {sol.report.relative_residual:.3e})")
    return sol


def _energy_lines(sol, out):
    print(f"dofs {sol.system.n}  elements {sol.mesh.n_elements}", file=out)
    print(f"energy_sq {sol.energy_sq:.7f}", file=out)
    ref = sol.problem.reference_energy_sq
    if ref is not None and sol.energy_sq <= ref + 1e-12:
        print(f"error {galerkin_error(ref, sol.energy_sq):.6f}", file=out)


def cmd_mesh(args, out):
    m = build_mesh(args.problem if args.problem != "manufactured" else "cube", n=args.n,
                   level=args.level, eps=args.eps, keep_hole_nodes=args.keep_hole_nodes)
    info = m.summary()
    info["aspect_ratio_max"] = float(aspect_ratios(m).max())
    if m.domain_tag == "borehole":
        info["aspect_ratio_hole"] = hole_aspect_ratio(m)
    for k, v in info.items():
        print(f"{k} {v}", file=out)
    if args.out:
        io.write_mesh(m, args.out)
    if args.text:
        io.write_mesh_text(m, args.text)


def _check_q1(args, strategies):
    if strategies and args.degree != 1:
        raise UsageError("estimation requires Q1")


def _estimate_lines(sol, strategies, bc, out, ref=None):
    ref = ref if ref is not None else sol.problem.reference_energy_sq
    results = []
    for s in strategies:
        est = estimate(sol.mesh, sol.u, sol.problem.source, s, bc)
        line = f"eta[{s}] {est.global_:.6f}"
        if ref is not None:
            line += f"  theta {effectivity(est.global_, ref, sol.energy_sq):.4f}"
        print(line, file=out)
        results.append(est)
    return results


def cmd_solve(args, out):
    _check_q1(args, args.estimate)
    sol = _solve(args)
    print(sol.report.summary(), file=out)
    _energy_lines(sol, out)
    if args.residuals:
        io.write_csv(args.residuals, ["iteration", "residual"], list(enumerate(sol.report.residual_history)))
    if args.export_mm:
        export_matrix_market(sol.system, args.export_mm)
    if args.estimate:
        _estimate_lines(sol, args.estimate, args.boundary_correction, out)
    if args.vtk:
        io.export_vtk(sol.mesh, args.vtk, sol.u, degree=args.degree)


def cmd_estimate(args, out):
    _check_q1(args, args.strategy)
    sol = _solve(args)
    _energy_lines(sol, out)
    ests = _estimate_lines(sol, args.strategy, args.boundary_correction, out, args.ref_energy)
    first = ests[0]
    if args.csv:
        io.write_csv(args.csv, ["element", "eta_e"], list(enumerate(first.per_element)))
    if args.vtk:
        io.export_vtk(sol.mesh, args.vtk, sol.u, first.per_element)


def cmd_amg_stats(args, out):
    from .assembly import assemble_poisson, impose_dirichlet
    from .problems import make_mesh

    prob = builtin_problem(args.problem)
    m = make_mesh(prob, _size(args), eps=args.eps, keep_hole_nodes=args.keep_hole_nodes)
    sys_ = impose_dirichlet(assemble_poisson(m, args.degree, prob.source), prob.boundary_value)
    h = amg.setup(sys_.matrix, amg.AmgParams(theta=args.theta, second_pass=args.second_pass))
    met = amg.metrics(h)
    print(f"{'L':>6} {met.levels}", file=out)
    for key in ("c_G", "c_A", "c_S", "c_1"):
        print(f"{key:>6} {met.as_dict()[key]:.2f}", file=out)
    print(f"{'level':>6} {'n':>10} {'nnz':>12}", file=out)
    for i, (n, z) in enumerate(zip(met.sizes, met.nnz), 1):
        print(f"{i:>6} {n:>10} {z:>12}", file=out)
    if args.csv:
        io.write_csv(args.csv, ["level", "n", "nnz"],
                     [(i, n, z) for i, (n, z) in enumerate(zip(met.sizes, met.nnz), 1)])


def cmd_convergence(args, out):
    _check_q1(args, args.estimate)
    if args.levels < 2:
        raise UsageError("--levels must be at least 2")
    if args.problem == "borehole":
        sizes = [args.level + i for i in range(args.levels)]
    else:
        sizes = [args.n * 2 ** i for i in range(args.levels)]
    strategies = args.estimate or []
    rows = convergence_study(args.problem, args.degree, sizes, args.solver, strategies,
                             args.boundary_correction, args.tol, args.large)
    ratios = [None] + error_ratios(rows)
    header = ["n_e", "h", "dofs", "energy_sq", "error", "ratio"]
    for s in strategies:
        header += [f"eta_{s}", f"theta_{s}"]
    print(" ".join(f"{h:>12}" for h in header), file=out)
    table = []
    for row, ratio in zip(rows, ratios):
        vals = [row.n_e, row.h, row.dofs, row.energy_sq, row.error, ratio]
        for s in strategies:
            vals += [row.estimates.get(s), row.effectivities.get(s)]
        table.append(vals)
        cells = [f"{row.n_e:>12d}", f"{row.h:>12.4f}", f"{row.dofs:>12d}", f"{row.energy_sq:>12.7f}",
                 f"{row.error:>12.6f}" if row.error is not None else f"{'-':>12}",
                 f"{ratio:>12.3f}" if ratio is not None else f"{'-':>12}"]
        for s in strategies:
            cells.append(f"{row.estimates[s]:>12.6f}")
            th = row.effectivities.get(s)
            cells.append(f"{th:>12.4f}" if th is not None else f"{'-':>12}")
        print(" ".join(cells), file=out)
    if args.csv:
        io.write_csv(args.csv, header, [["" if v is None else v for v in r] for r in table])


def cmd_export(args, out):
    sol = _solve(args)
    if args.vtk:
        io.export_vtk(sol.mesh, args.vtk, sol.u, degree=args.degree)
        print(f"wrote {args.vtk}", file=out)
    if args.line:
        fixed = tuple(float(v) for v in args.at.split(","))
        if len(fixed) != 2:
            raise UsageError("--at needs two comma-separated coordinates")
        t, v, ok = io.line_sample(sol.mesh, sol.u, args.line, fixed, args.samples, args.degree)
        if args.csv:
            io.write_line_csv(args.csv, args.line, t, v, ok)
        print(f"samples {len(t)} gaps {int((~ok).sum())} max {np.nanmax(v):.7f}", file=out)


COMMANDS = {"mesh": cmd_mesh, "solve": cmd_solve, "estimate": cmd_estimate, "amg-stats": cmd_amg_stats,
            "convergence": cmd_convergence, "export": cmd_export}


def run(command: str, out=None, **options) -> int:
    """Programmatic entry point: ``run("solve", n=16, solver="minres-amg")``.

    Options use the argparse destination names; anything not given takes the
    command line default.
    """
    argv = [command]
    for key, value in options.items():
        flag = "--" + key.replace("_", "-")
        if value is True:
            argv.append(flag)
        elif value is False or value is None:
            continue
        elif isinstance(value, (list, tuple)):
            argv += [flag, ",".join(map(str, value))]
        else:
            argv += [flag, str(value)]
    return main(argv, out)


def error_line(kind: str, message: str) -> str:
    return "hexpde-error " + json.dumps({"kind": kind, "message": message})


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = _parse(argv)
        _set_threads(args.threads)
        np.random.seed(args.seed)
        COMMANDS[args.command](args, out)
    except (UsageError, EstimationError) as exc:
        print(error_line("usage", str(exc)), file=sys.stderr)
        return 2
    except SolverDivergence as exc:
        print(error_line("divergence", str(exc)), file=sys.stderr)
        return 3
    except (ValueError, RuntimeError, OSError, np.linalg.LinAlgError) as exc:
        print(error_line(type(exc).__name__, str(exc)), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
