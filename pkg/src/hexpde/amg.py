"""Classical Ruge-Stueben algebraic multigrid.

Setup builds the strength graph, a two-pass C/F splitting, direct
interpolation and Galerkin coarse operators ``P^T A P``.  The V-cycle uses
forward Gauss-Seidel before and backward Gauss-Seidel after the coarse
correction, so it is a symmetric positive definite preconditioner.

Rows without strong couplings (Dirichlet identity rows in particular) are
isolated F-points: they get a zero interpolation row and are handled by
the smoother alone.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels

C_POINT, F_POINT, ISOLATED = 1, 0, 2


class SplittingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AmgParams:
    theta: float = 0.25
    presmooth: int = 2
    postsmooth: int = 2
    max_coarse: int = 100
    stall_ratio: float = 0.9
    max_levels: int = 30
    second_pass: str = "coupled"  # "coupled", "strong" or "none"


@dataclass(frozen=True)
class AmgMetrics:
    levels: int
    grid_complexity: float
    operator_complexity: float
    avg_stencil: float
    fine_stencil: float
    sizes: tuple = ()
    nnz: tuple = ()

    def as_dict(self) -> dict:
        return {"L": self.levels, "c_G": self.grid_complexity, "c_A": self.operator_complexity,
                "c_S": self.avg_stencil, "c_1": self.fine_stencil}


@dataclass
class AmgHierarchy:
    operators: list
    interpolations: list
    params: AmgParams = field(default_factory=AmgParams)
    splittings: list = field(default_factory=list)
    _coarse_solve: object = None
    _diags: list = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.operators)

    def __call__(self, b):
        return vcycle(self, b)


def _csr(A):
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def strength_graph(matrix, theta: float = 0.25) -> sp.csr_matrix:
    """Strong dependencies: row i has an entry at j iff
    ``-a_ij >= theta * max_{k != i} (-a_ik)``."""
    A = _csr(matrix)
    mask = _kernels.strength(A.indptr, A.indices, A.data, float(theta))
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    S = sp.csr_matrix((np.ones(mask.sum(), dtype=np.int8), (rows[mask], A.indices[mask])), shape=A.shape)
    S.sort_indices()
    return S


def ruge_stueben_coarsen(graph, second_pass: str = "strong", matrix=None) -> np.ndarray:
    """Two-pass Ruge-Stueben splitting of a strength graph.

    The first pass is the greedy maximal independent set weighted by the
    number of strong dependants.  The second pass visits each F-point i and
    checks every strongly connected F-point j for a C-point shared with i,
    promoting points to C where none exists.  ``second_pass`` selects how
    "shared" is read:

    * ``"strong"`` - the C-point must be in S_i and in S_j (textbook test);
    * ``"coupled"`` - in S_i and coupled to j in ``matrix`` (any nonzero);
    * ``"none"`` - skip the second pass.

    Returns an int array with 1 for C-points, 0 for F-points and 2 for
    isolated points (F-points with no strong couplings).
    """
    S = sp.csr_matrix(graph)
    S.sort_indices()
    T = sp.csr_matrix(S.T)
    T.sort_indices()
    i64 = lambda a: a.astype(np.int64)  # noqa: E731
    state = _kernels.rs_first_pass(i64(S.indptr), i64(S.indices), i64(T.indptr), i64(T.indices))
    if second_pass == "none":
        return state
    if second_pass == "strong":
        G = S
    elif second_pass == "coupled":
        if matrix is None:
            raise ValueError("second_pass='coupled' needs the matrix")
        G = _csr(matrix)
    else:
        raise ValueError(f"unknown second pass {second_pass!r}")
    return _kernels.rs_second_pass(i64(S.indptr), i64(S.indices), i64(G.indptr), i64(G.indices), state)


def build_interpolation(matrix, splitting, graph) -> sp.csr_matrix:
    """Direct interpolation from the strong C-neighbours of each F-point."""
    A = _csr(matrix)
    splitting = np.asarray(splitting, dtype=np.int64)
    smask = _align_mask(A, graph)
    cidx = np.cumsum(splitting == C_POINT) - 1
    nc = int((splitting == C_POINT).sum())
    p_ptr, p_idx, p_val, bad = _kernels.direct_interpolation(
        A.indptr, A.indices, A.data, smask, splitting, cidx)
    if bad >= 0:
        raise SplittingError(f"F-point {bad} has strong couplings but no strong C-neighbour")
    return sp.csr_matrix((p_val, p_idx, p_ptr), shape=(A.shape[0], nc))


def _align_mask(A, S):
    """Boolean per stored entry of A telling whether it is in S."""
    S = sp.csr_matrix(S)
    S.sort_indices()
    mask = np.zeros(A.nnz, dtype=bool)
    rows_a = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    rows_s = np.repeat(np.arange(S.shape[0]), np.diff(S.indptr))
    n = A.shape[1]
    key_a = rows_a.astype(np.int64) * n + A.indices
    key_s = rows_s.astype(np.int64) * n + S.indices
    mask[np.isin(key_a, key_s, assume_unique=True)] = True
    return mask


class _CoarseSolver:
    def __init__(self, A):
        if A.shape[0] <= 2000:
            self._chol = sla.cho_factor(A.toarray())
            self._lu = None
        else:
            self._chol = None
            self._lu = splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                            options={"SymmetricMode": True})

    def __call__(self, b):
        if self._chol is not None:
            return sla.cho_solve(self._chol, b)
        return self._lu.solve(b)


def setup(matrix, params: AmgParams | None = None, **overrides) -> AmgHierarchy:
    """Recursive coarsening until ``n <= max_coarse`` or coarsening stalls."""
    params = params or AmgParams()
    if overrides:
        params = AmgParams(**{**params.__dict__, **overrides})
    A = _csr(matrix)
    ops, interps, splits = [A], [], []
    while A.shape[0] > params.max_coarse and len(ops) < params.max_levels:
        S = strength_graph(A, params.theta)
        split = ruge_stueben_coarsen(S, params.second_pass, A)
        nc = int((split == C_POINT).sum())
        if nc == 0 or nc > params.stall_ratio * A.shape[0]:
            break
        P = build_interpolation(A, split, S)
        Ac = _csr(P.T @ A @ P)
        interps.append(P)
        splits.append(split)
        ops.append(Ac)
        A = Ac
    h = AmgHierarchy(ops, interps, params, splits)
    h._coarse_solve = _CoarseSolver(ops[-1])
    h._diags = [op.diagonal() for op in ops]
    for lvl, d in enumerate(h._diags[:-1]):
        if np.any(d == 0):
            raise ZeroDivisionError(f"zero diagonal on AMG level {lvl + 1}")
    return h


def vcycle(hierarchy: AmgHierarchy, rhs, level: int = 0) -> np.ndarray:
    """One V(nu_pre, nu_post) cycle from a zero initial guess."""
    b = np.asarray(rhs, dtype=float)
    if level == hierarchy.levels - 1:
        return hierarchy._coarse_solve(b)
    A = hierarchy.operators[level]
    P = hierarchy.interpolations[level]
    d = hierarchy._diags[level]
    p = hierarchy.params
    x = np.zeros_like(b)
    _kernels.gs_forward(A.indptr, A.indices, A.data, d, b, x, p.presmooth)
    r = b - A @ x
    x += P @ vcycle(hierarchy, P.T @ r, level + 1)
    _kernels.gs_backward(A.indptr, A.indices, A.data, d, b, x, p.postsmooth)
    return x


def metrics(hierarchy: AmgHierarchy) -> AmgMetrics:
    n = np.array([A.shape[0] for A in hierarchy.operators], dtype=float)
    nnz = np.array([A.nnz for A in hierarchy.operators], dtype=float)
    return AmgMetrics(
        levels=len(n),
        grid_complexity=float(n.sum() / n[0]),
        operator_complexity=float(nnz.sum() / nnz[0]),
        avg_stencil=float(np.mean(nnz / n)),
        fine_stencil=float(nnz[0] / n[0]),
        sizes=tuple(int(v) for v in n),
        nnz=tuple(int(v) for v in nnz),
    )
