"""Reference-cube basis functions, Gauss rules and the isoparametric map.

Everything here lives on the reference cube [-1, 1]^3 with coordinates
(xi, eta, zeta).  Local numbering:

* Q1 vertices 1-8: ``(-1,-1,-1), (1,-1,-1), (1,1,-1), (-1,1,-1)`` followed by
  the same four corners at ``zeta = +1``.
* Q2 nodes 9-27 come in three layers of constant ``eta``: nodes 9-13 on
  ``eta = -1``, 14-22 on ``eta = 0`` (22 is the element centre) and 23-27 on
  ``eta = +1``.  See ``Q2_NODES`` for the coordinates.
* Faces 1-6: ``zeta = -1``, ``xi = +1``, ``zeta = +1``, ``xi = -1``,
  ``eta = -1``, ``eta = +1``.

Arrays use zero-based indices; the 1-based numbers above are only labels.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import _kernels

Q1_VERTICES = np.array(
    [
        [-1, -1, -1],
        [1, -1, -1],
        [1, 1, -1],
        [-1, 1, -1],
        [-1, -1, 1],
        [1, -1, 1],
        [1, 1, 1],
        [-1, 1, 1],
    ],
    dtype=float,
)

Q2_NODES = np.vstack(
    [
        Q1_VERTICES,
        np.array(
            [
                [0, -1, -1],  # 9
                [1, -1, 0],
                [0, -1, 1],
                [-1, -1, 0],
                [0, -1, 0],  # 13
                [0, 0, -1],  # 14
                [1, 0, -1],
                [1, 0, 0],
                [1, 0, 1],
                [0, 0, 1],
                [-1, 0, 1],
                [-1, 0, 0],
                [-1, 0, -1],
                [0, 0, 0],  # 22
                [0, 1, -1],  # 23
                [1, 1, 0],
                [0, 1, 1],
                [-1, 1, 0],
                [0, 1, 0],  # 27
            ],
            dtype=float,
        ),
    ]
)

# (axis, side) of local faces 1..6
FACES = ((2, -1), (0, 1), (2, 1), (0, -1), (1, -1), (1, 1))
OPPOSITE_FACE = (2, 3, 0, 1, 5, 4)

# local Q2 node indices lying on each face, and the face-centre node
FACE_NODES = tuple(
    tuple(int(i) for i in np.flatnonzero(Q2_NODES[:, ax] == side)) for ax, side in FACES
)
FACE_CENTRES = tuple(
    int(np.flatnonzero((Q2_NODES[:, ax] == side) & (np.abs(Q2_NODES).sum(axis=1) == 1))[0])
    for ax, side in FACES
)
CENTRE_NODE = 21


class NonPositiveJacobianError(ValueError):
    """Raised when an element map is inverted or degenerate."""

    def __init__(self, element, det):
        self.element = element
        self.det = det
        super().__init__(f"non-positive Jacobian determinant {det:.3e} in element {element}")


@dataclass(frozen=True)
class BasisEval:
    values: np.ndarray  # (m, nb)
    ref_gradients: np.ndarray  # (m, nb, 3)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (m, 3)
    weights: np.ndarray  # (m,)


@dataclass(frozen=True)
class MapData:
    point: np.ndarray
    jacobian: np.ndarray
    det: np.ndarray
    inv_jacobian: np.ndarray


def _as_points(pt):
    pts = np.asarray(pt, dtype=float)
    return pts.reshape(-1, 3)


def _lagrange_1d(t):
    """Quadratic 1D Lagrange basis at -1, 0, 1 (value, derivative), shape (m, 3)."""
    n = np.stack([0.5 * (t - 1.0) * t, 1.0 - t * t, 0.5 * (1.0 + t) * t], axis=-1)
    dn = np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)
    return n, dn


def q1_eval(pt) -> BasisEval:
    """Trilinear basis ``(1 + xi_i xi)(1 + eta_i eta)(1 + zeta_i zeta) / 8``.

    ``pt`` may be a single point or an ``(m, 3)`` array; results always carry
    a leading point axis.
    """
    p = _as_points(pt)
    f = 1.0 + p[:, None, :] * Q1_VERTICES[None, :, :]  # (m, 8, 3)
    values = 0.125 * f.prod(axis=2)
    grads = np.empty(f.shape)
    grads[..., 0] = 0.125 * Q1_VERTICES[:, 0] * f[..., 1] * f[..., 2]
    grads[..., 1] = 0.125 * Q1_VERTICES[:, 1] * f[..., 0] * f[..., 2]
    grads[..., 2] = 0.125 * Q1_VERTICES[:, 2] * f[..., 0] * f[..., 1]
    return BasisEval(values, grads)


def q1_hessian(pt) -> np.ndarray:
    """Second reference derivatives of the trilinear basis, shape (m, 8, 3, 3).

    Only mixed derivatives are nonzero.
    """
    p = _as_points(pt)
    f = 1.0 + p[:, None, :] * Q1_VERTICES[None, :, :]
    v = Q1_VERTICES
    h = np.zeros(f.shape + (3,))
    for a, b, c in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
        h[..., a, b] = h[..., b, a] = 0.125 * v[:, a] * v[:, b] * f[..., c]
    return h


def q2_eval(pt) -> BasisEval:
    """Triquadratic Lagrange basis in local node order 1-27."""
    p = _as_points(pt)
    idx = (Q2_NODES + 1).astype(int)  # 0, 1, 2 selects N^1, N^2, N^3
    nx, dx = _lagrange_1d(p[:, 0])
    ny, dy = _lagrange_1d(p[:, 1])
    nz, dz = _lagrange_1d(p[:, 2])
    ax, ay, az = nx[:, idx[:, 0]], ny[:, idx[:, 1]], nz[:, idx[:, 2]]
    values = ax * ay * az
    grads = np.stack(
        [dx[:, idx[:, 0]] * ay * az, ax * dy[:, idx[:, 1]] * az, ax * ay * dz[:, idx[:, 2]]],
        axis=-1,
    )
    return BasisEval(values, grads)


def basis_eval(degree: int, pt) -> BasisEval:
    if degree == 1:
        return q1_eval(pt)
    if degree == 2:
        return q2_eval(pt)
    raise ValueError(f"unsupported degree {degree}")


@lru_cache(maxsize=None)
def gauss_1d(k: int):
    if not 1 <= k <= 5:
        raise ValueError(f"Gauss rule with {k} points per axis is not supported (1..5)")
    x, w = np.polynomial.legendre.leggauss(k)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def gauss_rule(points_per_axis: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule on the reference cube (x fastest)."""
    x, w = gauss_1d(points_per_axis)
    zz, yy, xx = np.meshgrid(x, x, x, indexing="ij")
    wz, wy, wx = np.meshgrid(w, w, w, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel(), zz.ravel()])
    wts = (wx * wy * wz).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def face_rule(face: int, points_per_axis: int = 3) -> QuadratureRule:
    """Gauss rule on local face ``face`` (0-based), returned as volume points.

    Weights are the 2D reference weights (they sum to 4).
    """
    ax, side = FACES[face]
    x, w = gauss_1d(points_per_axis)
    t1, t2 = (a for a in range(3) if a != ax)
    b, a = np.meshgrid(x, x, indexing="ij")
    wb, wa = np.meshgrid(w, w, indexing="ij")
    pts = np.empty((a.size, 3))
    pts[:, ax] = side
    pts[:, t1] = a.ravel()
    pts[:, t2] = b.ravel()
    wts = (wa * wb).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts)


def map_elements(coords, ref_gradients, *, check=True, offset=0):
    """Jacobian data for a batch of elements at tabulated points.

    Parameters
    ----------
    coords : (ne, nb, 3) nodal coordinates of each element
    ref_gradients : (m, nb, 3) reference basis gradients at the points
    check : raise ``NonPositiveJacobianError`` if any determinant is <= 0
    offset : element index of ``coords[0]``, used in error messages

    Returns
    -------
    jac : (ne, m, 3, 3) with ``jac[..., i, j] = d x_i / d xi_j``
    det : (ne, m)
    inv : (ne, m, 3, 3)
    """
    coords = np.ascontiguousarray(coords, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        jac, det, inv = _kernels.jacobians(coords, np.ascontiguousarray(ref_gradients, dtype=float))
    if check and not np.all(det > 0.0):
        e, q = np.argwhere(~(det > 0.0))[0]
        raise NonPositiveJacobianError(int(e) + offset, float(det[e, q]))
    return jac, det, inv


def physical_gradients(ref_gradients, inv):
    """``grad_x phi = J^-T grad_xi phi`` for all elements, shape (ne, m, nb, 3)."""
    return np.matmul(ref_gradients[None], inv)


def stiffness_blocks(ref_gradients, inv, wdet):
    """Element Laplace matrices from tabulated reference gradients, (ne, nb, nb)."""
    return _kernels.gradient_gram(np.ascontiguousarray(ref_gradients, dtype=float),
                                  np.ascontiguousarray(inv), np.ascontiguousarray(wdet))


def isoparametric_map(element_coords, pt, degree: int) -> MapData:
    """Map reference point(s) into an element with its own basis."""
    coords = np.asarray(element_coords, dtype=float)
    nb = 8 if degree == 1 else 27
    if coords.shape != (nb, 3):
        raise ValueError(f"degree {degree} map needs {nb} node coordinates, got {coords.shape}")
    basis = basis_eval(degree, pt)
    jac, det, inv = map_elements(coords[None], basis.ref_gradients)
    point = basis.values @ coords
    return MapData(point, jac[0], det[0], inv[0])
