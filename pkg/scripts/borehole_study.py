"""Borehole problem: mesh statistics, IC(0) and AMG iteration counts, a line sample.

    python scripts/borehole_study.py --level 2
"""
import argparse

import numpy as np

from hexpde import io
from hexpde.mesh import aspect_ratios, hole_aspect_ratio
from hexpde.problems import solve_problem


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--level", type=int, default=2)
    ap.add_argument("--csv", help="write the x-line at y=0.5, z=0")
    args = ap.parse_args()
    for solver in ("minres-ic0", "minres-amg"):
        sol = solve_problem("borehole", args.level, solver=solver)
        print(f"{solver:>11}: dofs {sol.system.n} its {sol.report.iterations} energy {sol.energy_sq:.7f}")
    m = sol.mesh
    print(f"elements {m.n_elements}  max aspect {aspect_ratios(m).max():.2f}  at hole {hole_aspect_ratio(m):.2f}")
    t, v, ok = io.line_sample(m, sol.u, "x", (0.5, 0.0), 401)
    print(f"line y=0.5 z=0: max {np.nanmax(v):.5f}, gap points {int((~ok).sum())}")
    if args.csv:
        io.write_line_csv(args.csv, "x", t, v, ok)


if __name__ == "__main__":
    main()
