"""Galerkin assembly of the Poisson stiffness, mass and load on a HexMesh."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .mesh import HexMesh
from .reference import basis_eval, gauss_rule, map_elements, stiffness_blocks

BATCH_SIZE = 2048
DEFAULT_QUADRATURE = {1: 2, 2: 3}


@dataclass(frozen=True, eq=False)
class DiscreteSystem:
    """Linear system plus the bookkeeping needed for energies and BCs.

    Before ``impose_dirichlet`` ``matrix`` is the raw stiffness and ``rhs``
    the raw load.  ``interior_matrix`` always holds the raw stiffness.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    interior_matrix: sp.csr_matrix
    dirichlet_nodes: np.ndarray
    dirichlet_values: np.ndarray | None
    degree: int
    dof_coords: np.ndarray
    element_dofs: np.ndarray
    mesh: HexMesh | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


def _callable_field(field):
    if callable(field):
        return field
    value = float(field)
    return lambda x: np.full(len(x), value)


def _batches(n, size):
    for start in range(0, n, size):
        yield start, min(start + size, n)


def _coo_to_csr(rows, cols, vals, n):
    # summation of duplicates keeps every coupling in the element pattern,
    # including entries that cancel to (near) zero
    A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def local_matrices(mesh: HexMesh, degree: int, kind: str = "stiffness", *, quad_order=None,
                   start=0, stop=None):
    """Element matrices for elements ``start:stop``, shape (B, nb, nb)."""
    coords, edofs, _ = mesh.dofs(degree)
    rule = gauss_rule(quad_order or DEFAULT_QUADRATURE[degree])
    basis = basis_eval(degree, rule.points)
    ec = coords[edofs[start:stop]]
    _, det, inv = map_elements(ec, basis.ref_gradients, offset=start)
    wdet = det * rule.weights
    if kind == "stiffness":
        return stiffness_blocks(basis.ref_gradients, inv, wdet)
    if kind == "mass":
        return np.einsum("eq,qa,qb->eab", wdet, basis.values, basis.values, optimize=True)
    raise ValueError(kind)


def _assemble_matrix(mesh, degree, kind, quad_order, batch_size):
    coords, edofs, _ = mesh.dofs(degree)
    ne, nb = edofs.shape
    vals = np.empty((ne, nb, nb))
    for a, b in _batches(ne, batch_size):
        vals[a:b] = local_matrices(mesh, degree, kind, quad_order=quad_order, start=a, stop=b)
    rows = np.broadcast_to(edofs[:, :, None], vals.shape).ravel()
    cols = np.broadcast_to(edofs[:, None, :], vals.shape).ravel()
    return _coo_to_csr(rows, cols, vals.ravel(), len(coords))


def assemble_load(mesh: HexMesh, degree: int, source, *, quad_order=None, batch_size=BATCH_SIZE):
    coords, edofs, _ = mesh.dofs(degree)
    f = _callable_field(source)
    rule = gauss_rule(quad_order or DEFAULT_QUADRATURE[degree])
    basis = basis_eval(degree, rule.points)
    b = np.zeros(len(coords))
    for a, c in _batches(len(edofs), batch_size):
        ec = coords[edofs[a:c]]
        _, det, _ = map_elements(ec, basis.ref_gradients, offset=a)
        xq = np.matmul(basis.values[None], ec)
        fq = np.asarray(f(xq.reshape(-1, 3)), dtype=float).reshape(det.shape)
        local = (fq * det * rule.weights) @ basis.values
        np.add.at(b, edofs[a:c].ravel(), local.ravel())
    return b


def assemble_poisson(mesh: HexMesh, degree: int = 1, source=1.0, *, quad_order=None,
                     batch_size: int = BATCH_SIZE) -> DiscreteSystem:
    """Stiffness ``K_ij = int grad phi_i . grad phi_j`` and load ``int f phi_i``.

    Boundary rows are kept; call ``impose_dirichlet`` afterwards.
    """
    K = _assemble_matrix(mesh, degree, "stiffness", quad_order, batch_size)
    b = assemble_load(mesh, degree, source, quad_order=quad_order, batch_size=batch_size)
    coords, edofs, bnd = mesh.dofs(degree)
    return DiscreteSystem(K, b, K, bnd, None, degree, coords, edofs, mesh)


def assemble_mass(mesh: HexMesh, degree: int = 1, *, quad_order=None,
                  batch_size: int = BATCH_SIZE) -> sp.csr_matrix:
    if quad_order is None:
        quad_order = degree + 1
    return _assemble_matrix(mesh, degree, "mass", quad_order, batch_size)


def impose_dirichlet(system: DiscreteSystem, g_D=0.0) -> DiscreteSystem:
    """Symmetric elimination of the Dirichlet rows and columns.

    Boundary rows/columns become identity rows/columns, the boundary rhs is
    set to ``g_D`` and interior rhs entries are corrected by ``K_ij g_j``.
    The sparsity pattern of the interior block is left untouched.
    """
    K = system.interior_matrix.tocoo()
    n = K.shape[0]
    bnd = np.asarray(system.dirichlet_nodes, dtype=np.int64)
    if bnd.size and (bnd.min() < 0 or bnd.max() >= n):
        raise IndexError("Dirichlet node index out of range")
    g = np.asarray(_callable_field(g_D)(system.dof_coords[bnd]), dtype=float)
    is_bnd = np.zeros(n, dtype=bool)
    is_bnd[bnd] = True
    gfull = np.zeros(n)
    gfull[bnd] = g

    rhs = system.rhs - system.interior_matrix @ gfull
    rhs[bnd] = g

    keep = ~(is_bnd[K.row] | is_bnd[K.col])
    rows = np.concatenate([K.row[keep], bnd])
    cols = np.concatenate([K.col[keep], bnd])
    vals = np.concatenate([K.data[keep], np.ones(bnd.size)])
    A = _coo_to_csr(rows, cols, vals, n)
    return replace(system, matrix=A, rhs=rhs, dirichlet_values=g)


def energy_norm_sq(system: DiscreteSystem, u) -> float:
    """``u^T K u`` with the stiffness assembled before BC imposition."""
    u = np.asarray(u, dtype=float)
    if u.shape != (system.interior_matrix.shape[0],):
        raise ValueError(f"vector of length {u.shape} does not match system size {system.n}")
    return float(u @ (system.interior_matrix @ u))


def export_matrix_market(system: DiscreteSystem, path) -> None:
    from scipy.io import mmwrite

    mmwrite(str(path), system.matrix.tocoo(), symmetry="symmetric")
