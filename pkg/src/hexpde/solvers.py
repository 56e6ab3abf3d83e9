"""Direct and iterative solvers: sparse factorisation, MINRES, IC(0), Gauss-Seidel."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import _kernels


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


class ICBreakdownError(NotPositiveDefiniteError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"IC(0) breakdown: non-positive pivot in row {row}")


class IndefinitePreconditionerError(ValueError):
    pass


@dataclass
class SolveReport:
    solution: np.ndarray
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    converged: bool = True
    relative_residual: float = float("nan")  # true ||b - Ax|| / ||b||
    method: str = "direct"

    def summary(self) -> str:
        return (f"method={self.method} converged={self.converged} iterations={self.iterations} "
                f"relres={self.relative_residual:.3e}")


def _unpack(system_or_matrix, rhs):
    if rhs is None:
        return system_or_matrix.matrix, system_or_matrix.rhs
    return system_or_matrix, rhs


def _csr(A):
    A = sp.csr_matrix(A)
    A.sort_indices()
    return A


def relative_residual(A, x, b) -> float:
    nb = np.linalg.norm(b)
    r = np.linalg.norm(b - A @ x)
    return float(r / nb) if nb > 0 else float(r)


def direct_solve(system_or_matrix, rhs=None) -> SolveReport:
    """Sparse symmetric factorisation with a minimum-degree ordering.

    Diagonal pivoting only, so the factorisation is ``L D L^T`` in LU form
    and a non-positive pivot means the matrix is not positive definite.
    """
    A, b = _unpack(system_or_matrix, rhs)
    A = sp.csc_matrix(A)
    lu = splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
              options={"SymmetricMode": True})
    piv = lu.U.diagonal()
    if not np.all(piv > 0) or not np.array_equal(lu.perm_r, lu.perm_c):
        raise NotPositiveDefiniteError("matrix is not symmetric positive definite (failed pivot)")
    x = lu.solve(np.asarray(b, dtype=float))
    return SolveReport(x, 0, [], True, relative_residual(A, x, b), "direct")


class IC0:
    """Zero fill-in incomplete Cholesky preconditioner, applies (L L^T)^-1."""

    def __init__(self, matrix, shift: float = 0.0):
        A = _csr(matrix)
        lower = sp.tril(A, format="csr")
        lower.sort_indices()
        if shift:
            lower = lower + shift * sp.diags(A.diagonal())
            lower = sp.csr_matrix(lower)
            lower.sort_indices()
        last = lower.indptr[1:] - 1
        rows = np.arange(A.shape[0])
        if np.any(lower.indptr[1:] == lower.indptr[:-1]) or np.any(lower.indices[last] != rows):
            raise NotPositiveDefiniteError("IC(0) needs a stored diagonal in every row")
        vals, status = _kernels.ic0_factor(lower.indptr, lower.indices, lower.data.astype(float))
        if status >= 0:
            raise ICBreakdownError(int(status))
        self.L = sp.csr_matrix((vals, lower.indices, lower.indptr), shape=A.shape)
        self.shift = shift

    def __call__(self, r):
        L = self.L
        y = _kernels.lower_solve(L.indptr, L.indices, L.data, np.asarray(r, dtype=float))
        return _kernels.lower_transpose_solve(L.indptr, L.indices, L.data, y)


def ic0(matrix, shift: float = 0.0) -> IC0:
    return IC0(matrix, shift)


def ic0_with_retry(matrix, alpha: float = 1e-3) -> IC0:
    """IC(0), retried once with a diagonal shift ``alpha * diag(A)``."""
    try:
        return IC0(matrix)
    except ICBreakdownError:
        return IC0(matrix, alpha)


def default_maxit(n: int) -> int:
    return int(2 * math.sqrt(n)) + 200


def minres(matrix, rhs, preconditioner=None, tol: float = 1e-10, maxit: int | None = None,
           x0=None) -> SolveReport:
    """Preconditioned MINRES for symmetric systems.

    ``preconditioner`` is a callable applying an SPD approximation of
    ``A^{-1}``.  The iteration stops once the preconditioned residual norm
    ``sqrt(r^T M r)`` has been reduced by ``tol`` relative to its initial
    value; that norm is recorded in ``residual_history`` (initial value
    first).
    """
    A = matrix
    b = np.asarray(rhs, dtype=float)
    n = b.shape[0]
    maxit = default_maxit(n) if maxit is None else maxit
    M = preconditioner if preconditioner is not None else (lambda v: v.copy())
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)

    r1 = b - A @ x if x0 is not None else b.copy()
    y = M(r1)
    beta1 = float(r1 @ y)
    if beta1 < 0:
        raise IndefinitePreconditionerError("preconditioner is not positive definite")
    beta1 = math.sqrt(beta1)
    history = [beta1]
    if beta1 == 0.0:
        return SolveReport(x, 0, history, True, relative_residual(A, x, b), "minres")

    oldb, beta, dbar, epsln, phibar = 0.0, beta1, 0.0, 0.0, beta1
    cs, sn = -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1
    converged = False
    itn = 0
    while itn < maxit:
        itn += 1
        v = y / beta
        y = A @ v
        if itn >= 2:
            y -= (beta / oldb) * r1
        alfa = float(v @ y)
        y -= (alfa / beta) * r2
        r1, r2 = r2, y
        y = M(r2)
        oldb = beta
        beta = float(r2 @ y)
        if beta < 0:
            raise IndefinitePreconditionerError("preconditioner is not positive definite")
        beta = math.sqrt(beta)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), np.finfo(float).eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x += phi * w
        history.append(phibar)
        if phibar <= tol * beta1:
            converged = True
            break
        if beta == 0.0:
            break
    return SolveReport(x, itn, history, converged, relative_residual(A, x, b), "minres")


def gauss_seidel(matrix, rhs, x, sweeps: int = 1, direction: str = "forward") -> np.ndarray:
    """Point Gauss-Seidel sweeps, updating ``x`` in place (and returning it)."""
    A = _csr(matrix)
    diag = A.diagonal()
    if np.any(diag == 0):
        raise ZeroDivisionError(f"zero diagonal entry in row {int(np.flatnonzero(diag == 0)[0])}")
    b = np.asarray(rhs, dtype=float)
    if x.dtype != np.float64:
        raise TypeError("x must be a float64 array")
    args = (A.indptr, A.indices, A.data, diag, b, x)
    if direction == "forward":
        _kernels.gs_forward(*args, sweeps)
    elif direction == "backward":
        _kernels.gs_backward(*args, sweeps)
    elif direction == "symmetric":
        for _ in range(sweeps):
            _kernels.gs_forward(*args, 1)
            _kernels.gs_backward(*args, 1)
    else:
        raise ValueError(f"unknown sweep direction {direction!r}")
    return x
