"""AMG hierarchy metrics and preconditioned MINRES counts.

    python scripts/amg_study.py --problem cube --sizes 16 32 64
    python scripts/amg_study.py --problem borehole --sizes 2 3
"""
import argparse
import time

from hexpde import amg
from hexpde.assembly import assemble_poisson, impose_dirichlet
from hexpde.problems import builtin_problem, make_mesh, solve_system


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="cube")
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--degree", type=int, default=1)
    ap.add_argument("--second-pass", default="coupled", choices=("coupled", "strong", "none"))
    args = ap.parse_args()
    params = amg.AmgParams(second_pass=args.second_pass)
    print(f"{'size':>5} {'dofs':>9} {'L':>3} {'c_G':>6} {'c_A':>6} {'c_S':>6} {'c_1':>6} {'its':>4} "
          f"{'setup s':>8} {'total s':>8}")
    prob = builtin_problem(args.problem)
    for size in args.sizes:
        system = impose_dirichlet(assemble_poisson(make_mesh(prob, size), args.degree, prob.source))
        A = system.matrix
        t0 = time.perf_counter()
        h = amg.setup(A, params)
        t1 = time.perf_counter()
        rep = solve_system(system, "minres-amg", amg_params=params)
        t2 = time.perf_counter()
        m = amg.metrics(h)
        print(f"{size:>5} {A.shape[0]:>9} {m.levels:>3} {m.grid_complexity:6.2f} {m.operator_complexity:6.2f} "
              f"{m.avg_stencil:6.2f} {m.fine_stencil:6.2f} {rep.iterations:>4} {t1 - t0:8.2f} {t2 - t1:8.2f}")


if __name__ == "__main__":
    main()
