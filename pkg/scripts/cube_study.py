"""Cube problem: Q1/Q2 energies, estimates and effectivities over refinement.

    python scripts/cube_study.py            # n = 8, 16, 32
    python scripts/cube_study.py --max-n 64 --solver minres-amg
"""
import argparse
import time

from hexpde.estimation import STRATEGIES
from hexpde.problems import convergence_study, error_ratios


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-n", type=int, default=32)
    ap.add_argument("--solver", default="direct")
    ap.add_argument("--no-estimates", action="store_true")
    args = ap.parse_args()
    sizes = [n for n in (8, 16, 32, 64) if n <= args.max_n]

    print("Q1 energies")
    rows = convergence_study("cube", 1, sizes, args.solver)
    for r, q in zip(rows, [None] + error_ratios(rows)):
        print(f"{r.n_e:>8} {r.h:.4f} {r.energy_sq:.7f} {r.error:.6f} {'' if q is None else f'{q:.3f}'}")

    print("Q2 energies (n/2 elements per axis, same unknowns)")
    rows = convergence_study("cube", 2, [n // 2 for n in sizes], "minres-amg" if args.max_n > 32 else args.solver)
    for r in rows:
        print(f"{r.n_e:>8} {r.h:.4f} {r.energy_sq:.7f} {r.error:.6f}")

    if args.no_estimates:
        return
    for bc in (True, False):
        print(f"estimates, boundary correction {'on' if bc else 'off'}")
        t0 = time.perf_counter()
        rows = convergence_study("cube", 1, sizes, args.solver, [s.value for s in STRATEGIES], bc)
        print("      n_e " + " ".join(f"{s.label:>18}" for s in STRATEGIES))
        for r in rows:
            cells = [f"{r.estimates[s.value]:.6f} ({r.effectivities[s.value]:.4f})" for s in STRATEGIES]
            print(f"{r.n_e:>9} " + " ".join(f"{c:>18}" for c in cells))
        print(f"  {time.perf_counter() - t0:.1f} s")


if __name__ == "__main__":
    main()
