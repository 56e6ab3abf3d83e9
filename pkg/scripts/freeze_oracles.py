"""Recompute the regression oracles stored in tests/oracles.json.

Reference targets live in the acceptance tests; this file only freezes
values produced by this implementation (estimates on coarse grids,
AMG level sizes, mesh counts) so later changes show up as diffs.

    python scripts/freeze_oracles.py
"""
import json
from pathlib import Path

from hexpde import amg, mesh
from hexpde.estimation import STRATEGIES, estimate
from hexpde.problems import solve_problem

OUT = Path(__file__).resolve().parents[1] / "tests" / "oracles.json"


def main():
    data = {}
    cube8 = solve_problem("cube", 8)
    data["cube8_q1_iterations_amg"] = solve_problem("cube", 8, solver="minres-amg").report.iterations
    data["cube8_estimates"] = {
        f"{s.value}_{'on' if bc else 'off'}": estimate(cube8.mesh, cube8.u, 1.0, s, bc).global_
        for s in STRATEGIES for bc in (True, False)
    }
    data["staircase4_estimate_q2rh"] = (lambda s: estimate(s.mesh, s.u, 1.0, "q2rh").global_)(
        solve_problem("staircase", 4))
    for n in (8, 16):
        h = amg.setup(solve_problem("cube", n).system.matrix)
        m = amg.metrics(h)
        data[f"cube{n}_amg"] = {"sizes": list(m.sizes), "nnz": list(m.nnz)}
    bh = solve_problem("borehole", 2, solver="minres-ic0")
    data["borehole2"] = {
        "q1_dofs": bh.system.n,
        "q1_dofs_keep_hole": mesh.build_borehole_mesh(2, keep_hole_nodes=True).n_vertices,
        "elements": bh.mesh.n_elements,
        "ic0_iterations": bh.report.iterations,
        "energy_sq": bh.energy_sq,
    }
    data["staircase2_boundary_faces"] = len(mesh.build_staircase_mesh(2).boundary_faces)
    OUT.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
