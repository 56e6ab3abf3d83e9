"""Hierarchical a posteriori error estimation for Q1 solutions.

For every element a small Laplace problem is solved in a bubble space that
enriches Q1: interior residual ``f + lap(u_h)`` plus half the flux jump on
each interior face as data.  Four bubble spaces are available:

========  =================================================  =====
strategy  space                                              dim
========  =================================================  =====
q2h       triquadratic functions at the 19 non-vertex nodes  19
q2rh      triquadratic at the 6 face centres and the centre  7
q1h2      trilinear hats on the 2x2x2 subdivision            19
q1rh2     those hats at face centres and centre only         7
========  =================================================  =====

With ``boundary_correction`` the bubbles sitting on a Dirichlet face are
dropped from that element's local problem, so the estimated error vanishes
on the boundary.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels
from .mesh import HexMesh, face_neighbours
from .reference import (
    CENTRE_NODE, FACE_CENTRES, FACE_NODES, FACES, Q2_NODES,
    BasisEval, QuadratureRule, gauss_1d, gauss_rule, map_elements, q1_eval, q1_hessian,
    q2_eval, stiffness_blocks,
)

ESTIMATE_BATCH = 1024


class Strategy(str, enum.Enum):
    Q2H = "q2h"
    Q2RH = "q2rh"
    Q1H2 = "q1h2"
    Q1RH2 = "q1rh2"

    @property
    def reduced(self) -> bool:
        return self in (Strategy.Q2RH, Strategy.Q1RH2)

    @property
    def piecewise(self) -> bool:
        return self in (Strategy.Q1H2, Strategy.Q1RH2)

    @property
    def nodes(self) -> tuple:
        """Local (0-based) Q2 node positions carrying a bubble."""
        if self.reduced:
            return tuple(sorted(FACE_CENTRES + (CENTRE_NODE,)))
        return tuple(range(8, 27))

    @property
    def label(self) -> str:
        return {"q2h": "Q2(h)", "q2rh": "Q2r(h)", "q1h2": "Q1(h/2)", "q1rh2": "Q1r(h/2)"}[self.value]


STRATEGIES = tuple(Strategy)


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorEstimate:
    per_element: np.ndarray
    global_: float
    strategy: Strategy
    boundary_correction: bool

    @property
    def eta(self) -> float:
        return self.global_


def _hat_1d(c, t):
    if c == 0:
        return 1.0 - np.abs(t), -np.sign(t)
    if c < 0:
        return np.where(t < 0, -t, 0.0), np.where(t < 0, -1.0, 0.0)
    return np.where(t > 0, t, 0.0), np.where(t > 0, 1.0, 0.0)


def bubble_basis(strategy, pt) -> BasisEval:
    """Bubble values and reference gradients at reference point(s).

    Piecewise strategies are only smooth inside each octant; gradients on
    the octant interfaces are not meaningful, so quadrature must avoid them.
    """
    strategy = Strategy(strategy)
    p = np.asarray(pt, dtype=float).reshape(-1, 3)
    nodes = list(strategy.nodes)
    if not strategy.piecewise:
        b = q2_eval(p)
        return BasisEval(b.values[:, nodes], b.ref_gradients[:, nodes])
    vals = np.empty((len(p), len(nodes)))
    grads = np.empty((len(p), len(nodes), 3))
    for k, node in enumerate(nodes):
        h = [_hat_1d(int(c), p[:, a]) for a, c in enumerate(Q2_NODES[node])]
        vals[:, k] = h[0][0] * h[1][0] * h[2][0]
        grads[:, k, 0] = h[0][1] * h[1][0] * h[2][0]
        grads[:, k, 1] = h[0][0] * h[1][1] * h[2][0]
        grads[:, k, 2] = h[0][0] * h[1][0] * h[2][1]
    return BasisEval(vals, grads)


@lru_cache(maxsize=None)
def _composite_rule(k: int = 3) -> QuadratureRule:
    """k^3 Gauss points on each of the 8 octants of the reference cube."""
    base = gauss_rule(k)
    pts, wts = [], []
    for s in Q2_NODES[:8]:
        pts.append(0.5 * (base.points + s))
        wts.append(base.weights / 8.0)
    pts, wts = np.vstack(pts), np.concatenate(wts)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def _face_points(face: int, piecewise: bool, k: int = 3):
    """Reference points (own side, neighbour side) and weights on a face."""
    ax, side = FACES[face]
    x, w = gauss_1d(k)
    if piecewise:
        x = np.concatenate([0.5 * (x - 1), 0.5 * (x + 1)])
        w = np.concatenate([w, w]) / 2
    t1, t2 = (a for a in range(3) if a != ax)
    b, a = np.meshgrid(x, x, indexing="ij")
    wb, wa = np.meshgrid(w, w, indexing="ij")
    own = np.empty((a.size, 3))
    own[:, ax] = side
    own[:, t1] = a.ravel()
    own[:, t2] = b.ravel()
    other = own.copy()
    other[:, ax] = -side
    return own, other, (wa * wb).ravel()


def _field(source):
    if callable(source):
        return source
    value = float(source)
    return lambda x: np.full(len(x), value)


def _q1_data(mesh: HexMesh, u_h):
    coords, edofs, _ = mesh.dofs(1)
    u = np.asarray(u_h, dtype=float)
    if u.shape != (len(coords),):
        if u.shape == (mesh.n_nodes,) and mesh.n_nodes != len(coords):
            raise EstimationError("estimation requires Q1 (got a vector of Q2 length)")
        raise EstimationError(f"u_h has shape {u.shape}, expected ({len(coords)},)")
    return coords, edofs, u


def _face_gradients(coords, edofs, u, elems, pts):
    """Physical points and gradients of u_h at reference points on given elements."""
    basis = q1_eval(pts)
    ec = coords[edofs[elems]]
    _, det, inv = map_elements(ec, basis.ref_gradients)
    phys = np.matmul(basis.values[None], ec)
    gref = np.tensordot(u[edofs[elems]], basis.ref_gradients, axes=([1], [1]))
    grad = np.matmul(gref[:, :, None, :], inv)[:, :, 0]
    return phys, grad, det, inv


def _face_loads(coords, edofs, u, nbr, elems, face, bubble_vals, piecewise):
    """Load contributions ``int_F 1/2 [[du/dn]] v`` for one local face (0-based)."""
    ax, side = FACES[face]
    own_pts, other_pts, w = _face_points(face, piecewise)
    phys, grad, det, inv = _face_gradients(coords, edofs, u, elems, own_pts)
    nvec = side * det[..., None] * inv[:, :, ax, :]  # area-weighted outward normal
    out = np.zeros((len(elems), bubble_vals.shape[1]))
    nb = nbr[elems, face]
    inner = nb >= 0
    if not inner.any():
        return out
    ie = np.flatnonzero(inner)
    phys_n, grad_n, _, _ = _face_gradients(coords, edofs, u, nb[ie], other_pts)
    scale = np.abs(phys[ie]).max() + 1.0
    if not np.allclose(phys_n, phys[ie], rtol=0.0, atol=1e-10 * scale):
        raise EstimationError(f"inconsistent face orientation between element {elems[ie][0]} "
                              f"and its neighbour across face {face + 1}")
    jump = 0.5 * np.einsum("eqk,eqk->eq", grad_n - grad[ie], nvec[ie])
    out[ie] = (jump * w) @ bubble_vals
    return out


def flux_jumps(mesh: HexMesh, u_h, element: int, face: int) -> np.ndarray:
    """Half flux jump ``(grad u_nbr - grad u_e) . n_e / 2`` at face points.

    ``face`` is the local face number 1..6.  Boundary faces give zeros.
    """
    coords, edofs, u = _q1_data(mesh, u_h)
    f0 = face - 1
    ax, side = FACES[f0]
    own_pts, other_pts, _ = _face_points(f0, False)
    nbr = face_neighbours(mesh)[element, f0]
    phys, grad, det, inv = _face_gradients(coords, edofs, u, np.array([element]), own_pts)
    if nbr < 0:
        return np.zeros(len(own_pts))
    phys_n, grad_n, _, _ = _face_gradients(coords, edofs, u, np.array([nbr]), other_pts)
    if not np.allclose(phys_n, phys, rtol=0.0, atol=1e-10 * (np.abs(phys).max() + 1.0)):
        raise EstimationError(f"inconsistent face orientation between elements {element} and {nbr}")
    n = side * inv[0, :, ax, :]
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    return 0.5 * np.einsum("qk,qk->q", grad_n[0] - grad[0], n)


def laplacian_q1(element_coords, u_local, pts) -> np.ndarray:
    """Physical Laplacian of the trilinear expansion ``u_local`` on elements.

    ``element_coords`` is (ne, 8, 3), ``u_local`` (ne, 8); returns (ne, m).
    """
    basis = q1_eval(pts)
    hess = np.ascontiguousarray(q1_hessian(pts))
    ec = np.ascontiguousarray(element_coords, dtype=float)
    _, _, inv = map_elements(ec, basis.ref_gradients)
    return _kernels.q1_laplacian(ec, np.ascontiguousarray(u_local, dtype=float),
                                 basis.ref_gradients, hess, inv)


def interior_residual(mesh: HexMesh, u_h, source, pts, elements=None) -> np.ndarray:
    """``f + lap(u_h)`` at reference points of the given elements, (ne, m)."""
    coords, edofs, u = _q1_data(mesh, u_h)
    elems = np.arange(mesh.n_elements) if elements is None else np.atleast_1d(elements)
    ec = coords[edofs[elems]]
    lap = laplacian_q1(ec, u[edofs[elems]], pts)
    xq = np.matmul(q1_eval(pts).values[None], ec)
    f = np.asarray(_field(source)(xq.reshape(-1, 3)), dtype=float).reshape(lap.shape)
    return f + lap


def _boundary_bubbles(mesh, strategy):
    """(ne, nbub) mask of bubbles lying on a boundary face of their element."""
    nodes = strategy.nodes
    on_face = np.zeros((6, len(nodes)), dtype=bool)
    for f in range(6):
        on_face[f] = [n in FACE_NODES[f] for n in nodes]
    mask = np.zeros((mesh.n_elements, len(nodes)), dtype=bool)
    if len(mesh.boundary_faces):
        e, f = mesh.boundary_faces[:, 0], mesh.boundary_faces[:, 1] - 1
        np.logical_or.at(mask, e, on_face[f])
    return mask


def local_problems(mesh: HexMesh, u_h, source=1.0, strategy="q2rh", boundary_correction=False,
                   start=0, stop=None, *, neighbours=None, dropped=None):
    """Local bubble stiffness matrices and loads for elements ``start:stop``.

    ``neighbours`` and ``dropped`` (the boundary bubble mask) can be passed
    in precomputed when looping over batches.
    """
    strategy = Strategy(strategy)
    coords, edofs, u = _q1_data(mesh, u_h)
    stop = mesh.n_elements if stop is None else stop
    elems = np.arange(start, stop)
    rule = _composite_rule() if strategy.piecewise else gauss_rule(3)
    bub = bubble_basis(strategy, rule.points)
    geo = q1_eval(rule.points)
    ec = coords[edofs[elems]]
    _, det, inv = map_elements(ec, geo.ref_gradients, offset=start)
    wdet = det * rule.weights
    K = stiffness_blocks(bub.ref_gradients, inv, wdet)
    R = interior_residual(mesh, u, source, rule.points, elems)
    r = (R * wdet) @ bub.values

    nbr = face_neighbours(mesh) if neighbours is None else neighbours
    for f in range(6):
        own_pts = _face_points(f, strategy.piecewise)[0]
        r += _face_loads(coords, edofs, u, nbr, elems, f, bubble_basis(strategy, own_pts).values,
                         strategy.piecewise)

    if boundary_correction:
        drop = (_boundary_bubbles(mesh, strategy) if dropped is None else dropped)[elems]
        if drop.any():
            keep = ~drop
            K = K * keep[:, :, None] * keep[:, None, :]
            e, i = np.nonzero(drop)
            K[e, i, i] = 1.0
            r = np.where(drop, 0.0, r)
    return K, r


def estimate(mesh, u_h, source=1.0, strategy="q2rh", boundary_correction: bool = False, *,
             degree: int = 1, batch_size: int = ESTIMATE_BATCH) -> ErrorEstimate:
    """Per-element indicators ``eta_e^2 = r_T^T K_T^-1 r_T`` and their root sum.

    ``mesh`` may also be a ``DiscreteSystem``; its degree is then checked.
    """
    if hasattr(mesh, "interior_matrix"):
        degree = mesh.degree
        mesh = mesh.mesh
    if degree != 1:
        raise EstimationError("estimation requires Q1")
    strategy = Strategy(strategy)
    eta2 = np.empty(mesh.n_elements)
    nbr = face_neighbours(mesh)
    drop = _boundary_bubbles(mesh, strategy) if boundary_correction else None
    for a in range(0, mesh.n_elements, batch_size):
        b = min(a + batch_size, mesh.n_elements)
        K, r = local_problems(mesh, u_h, source, strategy, boundary_correction, a, b,
                              neighbours=nbr, dropped=drop)
        try:
            L = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise EstimationError(f"singular local problem in elements {a}..{b - 1}") from exc
        y = np.linalg.solve(L, r[..., None])[..., 0]
        eta2[a:b] = np.einsum("eb,eb->e", y, y)
    eta = np.sqrt(eta2)
    return ErrorEstimate(eta, float(np.sqrt(eta2.sum())), strategy, bool(boundary_correction))


def effectivity(eta: float, ref_energy_sq: float, energy_sq: float, slack: float = 1e-12) -> float:
    """``eta / ||u_ref - u_h||_E`` with the error taken from Galerkin orthogonality."""
    diff = ref_energy_sq - energy_sq
    if diff < -slack:
        raise ValueError(f"reference energy {ref_energy_sq} is below the computed energy {energy_sq}")
    err = np.sqrt(max(diff, 0.0))
    if err == 0.0:
        return float("inf") if eta > 0 else 1.0
    return float(eta / err)
