"""Effectivity of Q2(h) and Q2r(h) on the bubble solution, with and without correction.

    python scripts/manufactured_effectivity.py --max-n 64
"""
import argparse

from hexpde.estimation import effectivity, estimate
from hexpde.problems import BUBBLE_ENERGY_SQ, solve_problem


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-n", type=int, default=32)
    args = ap.parse_args()
    print(f"{'n':>4} {'error':>10} {'q2h':>9} {'q2h*':>9} {'q2rh':>9} {'q2rh*':>9}")
    for n in (8, 16, 32, 64):
        if n > args.max_n:
            break
        sol = solve_problem("manufactured", n, solver="minres-amg")
        err = (BUBBLE_ENERGY_SQ - sol.energy_sq) ** 0.5
        cells = []
        for s in ("q2h", "q2rh"):
            for bc in (True, False):  # starred = without correction
                eta = estimate(sol.mesh, sol.u, sol.problem.source, s, bc).global_
                cells.append(effectivity(eta, BUBBLE_ENERGY_SQ, sol.energy_sq))
        print(f"{n:>4} {err:10.6f} " + " ".join(f"{c:9.5f}" for c in cells))


if __name__ == "__main__":
    main()
