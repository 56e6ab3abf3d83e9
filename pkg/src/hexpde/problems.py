"""Built-in test problems, the mesh-assemble-solve pipeline and convergence studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import amg
from .assembly import DiscreteSystem, assemble_poisson, energy_norm_sq, impose_dirichlet
from .estimation import Strategy, effectivity, estimate
from .mesh import HexMesh, build_mesh, element_extents
from .solvers import SolveReport, direct_solve, ic0_with_retry, minres

PROBLEMS = ("cube", "staircase", "borehole", "manufactured")
SOLVERS = ("direct", "minres-ic0", "minres-amg")
DOF_LIMIT = 3_000_000


class DofLimitError(RuntimeError):
    pass


def _one(x):
    return np.ones(len(x))


def _zero(x):
    return np.zeros(len(x))


def bubble_solution(x):
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    return (1 - x[:, 0] ** 2) * (1 - x[:, 1] ** 2) * (1 - x[:, 2] ** 2)


def bubble_forcing(x):
    """``-lap`` of ``(1-x^2)(1-y^2)(1-z^2)``."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    a, b, c = 1 - x[:, 0] ** 2, 1 - x[:, 1] ** 2, 1 - x[:, 2] ** 2
    return 2.0 * (b * c + a * c + a * b)


# |grad u|^2 integrates to 3 * (8/3) * (16/15)^2
BUBBLE_ENERGY_SQ = 2048.0 / 225.0


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    domain: str
    source: Callable = _one
    boundary_value: Callable = _zero
    exact_solution: Callable | None = None
    reference_energy_sq: float | None = None
    mesh_params: dict = field(default_factory=dict)


def builtin_problem(name: str) -> ProblemSpec:
    if name == "cube":
        return ProblemSpec("cube", "cube", reference_energy_sq=0.64539192)
    if name == "staircase":
        # Q2 energy on 196,608 elements; only about 7 digits are known
        return ProblemSpec("staircase", "staircase", reference_energy_sq=0.2967206)
    if name == "borehole":
        return ProblemSpec("borehole", "borehole", mesh_params={"eps": 0.01})
    if name == "manufactured":
        return ProblemSpec("manufactured", "cube", bubble_forcing, _zero, bubble_solution,
                           BUBBLE_ENERGY_SQ)
    raise ValueError(f"unknown problem {name!r}; choose from {', '.join(PROBLEMS)}")


def galerkin_error(reference_energy_sq: float, energy_sq: float, slack: float = 1e-12) -> float:
    """``sqrt(||u_ref||^2 - ||u_h||^2)``, valid by Galerkin orthogonality."""
    diff = reference_energy_sq - energy_sq
    if diff < -slack:
        raise ValueError(f"inconsistent reference: {reference_energy_sq} < computed energy {energy_sq}")
    return math.sqrt(max(diff, 0.0))


@dataclass
class ConvergenceRow:
    n_e: int
    h: float
    dofs: int
    energy_sq: float
    error: float | None = None
    estimates: dict = field(default_factory=dict)
    effectivities: dict = field(default_factory=dict)
    iterations: int = 0
    converged: bool = True
    size: int | None = None  # n for uniform grids, level for the borehole


@dataclass
class Solution:
    problem: ProblemSpec
    mesh: HexMesh
    system: DiscreteSystem
    report: SolveReport
    energy_sq: float

    @property
    def u(self) -> np.ndarray:
        return self.report.solution


def make_mesh(problem: ProblemSpec, size: int | None = None, **kw) -> HexMesh:
    params = {**problem.mesh_params, **kw}
    if problem.domain == "borehole":
        return build_mesh("borehole", level=size or 2, eps=params.get("eps", 0.01),
                          keep_hole_nodes=params.get("keep_hole_nodes", False))
    return build_mesh(problem.domain, n=size)


def estimate_dofs(problem: ProblemSpec, size: int, degree: int) -> int:
    if problem.domain == "borehole":
        n = 12 * size * 2 + 2
        return (degree * n + 1) ** 2 * (degree * 32 * 2 ** (size - 2) + 1)
    return (degree * size + 1) ** 3


def solve_system(system: DiscreteSystem, solver: str = "direct", tol: float = 1e-10,
                 maxit: int | None = None, amg_params: amg.AmgParams | None = None) -> SolveReport:
    if solver == "direct":
        return direct_solve(system)
    if solver == "minres-ic0":
        M = ic0_with_retry(system.matrix)
        rep = minres(system.matrix, system.rhs, M, tol=tol, maxit=maxit)
    elif solver == "minres-amg":
        M = amg.setup(system.matrix, amg_params)
        rep = minres(system.matrix, system.rhs, M, tol=tol, maxit=maxit)
    else:
        raise ValueError(f"unknown solver {solver!r}; choose from {', '.join(SOLVERS)}")
    rep.method = solver
    return rep


def solve_problem(problem: ProblemSpec | str, size: int | None = None, degree: int = 1,
                  solver: str = "direct", tol: float = 1e-10, maxit: int | None = None,
                  large: bool = False, mesh: HexMesh | None = None, **mesh_kw) -> Solution:
    """Mesh, assemble, impose the boundary data and solve."""
    if isinstance(problem, str):
        problem = builtin_problem(problem)
    if mesh is None:
        if not large and estimate_dofs(problem, size or 2, degree) > DOF_LIMIT:
            raise DofLimitError(f"more than {DOF_LIMIT} unknowns; pass large=True (--large) to run anyway")
        mesh = make_mesh(problem, size, **mesh_kw)
    system = impose_dirichlet(assemble_poisson(mesh, degree, problem.source), problem.boundary_value)
    report = solve_system(system, solver, tol, maxit)
    return Solution(problem, mesh, system, report, energy_norm_sq(system, report.solution))


def mesh_width(mesh: HexMesh) -> float:
    if mesh.domain_tag in ("cube", "staircase"):
        return 2.0 / mesh.params["n"]
    return float(element_extents(mesh).max())


def convergence_study(problem: ProblemSpec | str, degree: int = 1, sizes=(8, 16, 32),
                      solver: str = "direct", strategies=(), boundary_correction: bool = False,
                      tol: float = 1e-10, large: bool = False) -> list[ConvergenceRow]:
    """One row per mesh size: energy, Galerkin error and optional estimates."""
    if isinstance(problem, str):
        problem = builtin_problem(problem)
    sizes = list(sizes)
    if len(sizes) < 2:
        raise ValueError("a convergence study needs at least two levels")
    strategies = [Strategy(s) for s in strategies]
    if strategies and degree != 1:
        raise ValueError("estimation requires Q1")
    rows = []
    for size in sizes:
        sol = solve_problem(problem, size, degree, solver, tol, large=large)
        ref = problem.reference_energy_sq
        err = galerkin_error(ref, sol.energy_sq) if ref is not None else None
        row = ConvergenceRow(sol.mesh.n_elements, mesh_width(sol.mesh), sol.system.n, sol.energy_sq,
                             err, iterations=sol.report.iterations, converged=sol.report.converged,
                             size=size)
        for s in strategies:
            est = estimate(sol.mesh, sol.u, problem.source, s, boundary_correction)
            row.estimates[s.value] = est.global_
            if ref is not None:
                row.effectivities[s.value] = effectivity(est.global_, ref, sol.energy_sq)
        rows.append(row)
    return rows


def error_ratios(rows) -> list[float]:
    errs = [r.error for r in rows]
    if any(e is None for e in errs):
        return []
    return [a / b if b > 0 else float("inf") for a, b in zip(errs[:-1], errs[1:])]
