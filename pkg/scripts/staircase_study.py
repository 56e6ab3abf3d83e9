"""Staircase domain: Q1 against Q2 at matched unknown counts, plus estimates.

    python scripts/staircase_study.py
"""
from hexpde.estimation import STRATEGIES
from hexpde.problems import convergence_study, error_ratios


def main():
    q1 = convergence_study("staircase", 1, (8, 16, 32), strategies=[s.value for s in STRATEGIES])
    q2 = convergence_study("staircase", 2, (4, 8, 16))
    ratios = [None] + error_ratios(q1)
    print(f"{'n_e':>8} {'Q1 energy':>11} {'error':>9} {'ratio':>6} | {'n_e':>6} {'Q2 energy':>11} {'error':>9}")
    for a, b, q in zip(q1, q2, ratios):
        print(f"{a.n_e:>8} {a.energy_sq:.7f} {a.error:.6f} {'' if q is None else f'{q:6.3f}':>6} | "
              f"{b.n_e:>6} {b.energy_sq:.7f} {b.error:.6f}")
    print("estimates, no boundary correction")
    for r in q1:
        print(f"{r.n_e:>8} " + "  ".join(f"{s.label} {r.estimates[s.value]:.6f}" for s in STRATEGIES))


if __name__ == "__main__":
    main()
