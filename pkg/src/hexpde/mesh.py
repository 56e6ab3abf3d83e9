"""Tensor-product hexahedral meshes for the cube, staircase and borehole domains.

Meshes are built on a lattice of Q2 nodes (the vertex grid plus every edge,
face and cell midpoint).  Global node numbers are lexicographic in
(x, y, z) with x fastest; elements are ordered the same way by cell index.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .reference import FACE_CENTRES, FACE_NODES, Q2_NODES

DOMAINS = ("cube", "staircase", "borehole", "custom")

# analytic volumes; the borehole removes a (2 eps) x 1 x (2 eps) slot
def domain_volume(tag: str, eps: float = 0.01) -> float:
    return {"cube": 8.0, "staircase": 6.0, "borehole": 8.0 - 4.0 * eps**2}[tag]


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class HexMesh:
    """Immutable hexahedral mesh with 27-node connectivity.

    ``vertex_mask`` flags the nodes that carry Q1 degrees of freedom.  It is
    normally the set of element vertices, but a mesh may keep isolated
    lattice vertices (see ``build_borehole_mesh``), which are then boundary
    nodes of every discretisation.
    """

    nodes: np.ndarray
    elements_q2: np.ndarray
    boundary_nodes: np.ndarray
    boundary_faces: np.ndarray
    domain_tag: str = "custom"
    vertex_mask: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vertex_mask is None:
            mask = np.zeros(len(self.nodes), dtype=bool)
            mask[self.elements_q2[:, :8]] = True
            object.__setattr__(self, "vertex_mask", mask)
        for a in (self.nodes, self.elements_q2, self.boundary_nodes, self.boundary_faces, self.vertex_mask):
            a.setflags(write=False)

    @property
    def elements_q1(self) -> np.ndarray:
        return self.elements_q2[:, :8]

    @property
    def n_elements(self) -> int:
        return len(self.elements_q2)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_vertices(self) -> int:
        return int(self.vertex_mask.sum())

    def dofs(self, degree: int):
        """Degree-of-freedom layout for Q1 or Q2.

        Returns ``(coords, element_dofs, boundary_dofs)`` with dofs numbered
        consecutively in global node order.
        """
        if degree == 2:
            return self.nodes, self.elements_q2, self.boundary_nodes
        if degree != 1:
            raise ValueError(f"unsupported degree {degree}")
        return self._q1_layout

    @cached_property
    def _q1_layout(self):
        ids = np.flatnonzero(self.vertex_mask)
        renum = np.full(self.n_nodes, -1, dtype=np.int64)
        renum[ids] = np.arange(len(ids))
        bnd = renum[self.boundary_nodes]
        out = (self.nodes[ids], renum[self.elements_q1], np.sort(bnd[bnd >= 0]))
        for a in out:
            a.setflags(write=False)
        return out

    def summary(self) -> dict:
        return {
            "domain": self.domain_tag,
            "elements": self.n_elements,
            "q2_nodes": self.n_nodes,
            "q1_vertices": self.n_vertices,
            "boundary_faces": len(self.boundary_faces),
            **self.params,
        }


def classify_boundary(elements_q2: np.ndarray, n_nodes: int | None = None):
    """Find boundary faces (owned by exactly one element) and their nodes.

    Faces are identified by their centre node, which is unique per face in
    a conforming 27-node mesh.  Returns ``(boundary_nodes, boundary_faces)``
    where faces are ``(element, local face 1..6)`` pairs.
    """
    elements_q2 = np.asarray(elements_q2)
    centres = elements_q2[:, list(FACE_CENTRES)]  # (ne, 6)
    keys = centres.ravel()
    _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
    if np.any(counts > 2):
        bad = keys[np.flatnonzero(counts[inverse] > 2)[0]]
        raise MeshError(f"non-conforming connectivity: face with centre node {bad} shared by >2 elements")
    on_bnd = (counts[inverse] == 1).reshape(centres.shape)
    elem, face = np.nonzero(on_bnd)
    faces = np.column_stack([elem, face + 1]).astype(np.int64)
    face_nodes = np.asarray(FACE_NODES)  # (6, 9)
    nodes = np.unique(elements_q2[elem[:, None], face_nodes[face]])
    return nodes.astype(np.int64), faces


def face_neighbours(mesh: HexMesh) -> np.ndarray:
    """Element across each local face, -1 on the boundary; shape (ne, 6)."""
    centres = mesh.elements_q2[:, list(FACE_CENTRES)].ravel()
    order = np.argsort(centres, kind="stable")
    s = centres[order]
    nbr = np.full(centres.size, -1, dtype=np.int64)
    same = np.flatnonzero(s[1:] == s[:-1])
    a, b = order[same], order[same + 1]
    nbr[a] = b // 6
    nbr[b] = a // 6
    return nbr.reshape(-1, 6)


def _lattice_mesh(xv, yv, zv, keep_cell, tag, *, keep_all_vertices=False, params=None):
    """Build a mesh from vertex coordinates per axis and a cell mask."""
    xv, yv, zv = (np.asarray(a, dtype=float) for a in (xv, yv, zv))
    lat = []
    for v in (xv, yv, zv):
        q = np.empty(2 * len(v) - 1)
        q[0::2] = v
        q[1::2] = 0.5 * (v[1:] + v[:-1])
        lat.append(q)
    nx, ny, nz = (len(v) - 1 for v in (xv, yv, zv))
    Lx, Ly = 2 * nx + 1, 2 * ny + 1

    kk, jj, ii = np.meshgrid(np.arange(nz), np.arange(ny), np.arange(nx), indexing="ij")
    cells = np.column_stack([ii.ravel(), jj.ravel(), kk.ravel()])
    cells = cells[keep_cell.transpose(2, 1, 0).ravel()]  # keep_cell indexed [i, j, k]
    off = (Q2_NODES + 1).astype(np.int64)
    gl = 2 * cells[:, None, :] + off[None, :, :]  # lattice indices (ne, 27, 3)
    lin = gl[..., 0] + Lx * (gl[..., 1] + Ly * gl[..., 2])

    used = np.zeros(Lx * Ly * (2 * nz + 1), dtype=bool)
    used[lin.ravel()] = True
    if keep_all_vertices:
        used[:] = True
    ids = np.flatnonzero(used)
    renum = np.full(used.size, -1, dtype=np.int64)
    renum[ids] = np.arange(len(ids))
    elements = renum[lin]

    li = ids % Lx
    lj = (ids // Lx) % Ly
    lk = ids // (Lx * Ly)
    nodes = np.column_stack([lat[0][li], lat[1][lj], lat[2][lk]])
    vmask = (li % 2 == 0) & (lj % 2 == 0) & (lk % 2 == 0)

    bnodes, bfaces = classify_boundary(elements)
    if keep_all_vertices:
        orphan = np.ones(len(ids), dtype=bool)
        orphan[elements.ravel()] = False
        bnodes = np.union1d(bnodes, np.flatnonzero(orphan))
    else:
        vmask = None
    return HexMesh(nodes, elements, bnodes, bfaces, tag, vmask, dict(params or {}))


def build_cube_mesh(n: int) -> HexMesh:
    """Uniform n x n x n mesh of [-1, 1]^3."""
    if int(n) != n or n < 1:
        raise ValueError(f"cube mesh needs n >= 1, got {n}")
    v = np.linspace(-1.0, 1.0, int(n) + 1)
    keep = np.ones((n, n, n), dtype=bool)
    return _lattice_mesh(v, v, v, keep, "cube", params={"n": int(n)})


def build_staircase_mesh(n: int) -> HexMesh:
    """Uniform mesh of [-1,1]^3 minus the column [-1,0) x [-1,0) x [-1,1]."""
    if int(n) != n or n < 2 or n % 2:
        raise ValueError(f"staircase mesh needs even n >= 2, got {n}")
    v = np.linspace(-1.0, 1.0, int(n) + 1)
    c = 0.5 * (v[1:] + v[:-1])
    keep = ~((c[:, None, None] < 0) & (c[None, :, None] < 0)) & np.ones((1, 1, n), dtype=bool)
    return _lattice_mesh(v, v, v, keep, "staircase", params={"n": int(n)})


def borehole_axis(level: int, eps: float) -> np.ndarray:
    """Stretched vertex coordinates for the x and z axes of the borehole grid.

    Two cells of width ``eps`` span the hole; each side then carries
    ``12 * level`` cells in geometric progression starting at width ``eps``
    and exactly filling ``[eps, 1]``.
    """
    m = 12 * level
    length = 1.0 - eps
    if m * eps >= length:
        raise ValueError(f"eps={eps} too large for {m} stretched cells per side")
    if m * eps * (1 + 1e-12) > length:
        ratio = 1.0
    else:
        g = lambda r: eps * (r**m - 1.0) / (r - 1.0) - length  # noqa: E731
        ratio = brentq(g, 1.0 + 1e-12, 2.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    widths = eps * ratio ** np.arange(m)
    side = eps + np.concatenate([[0.0], np.cumsum(widths)])
    side[-1] = 1.0
    return np.concatenate([-side[::-1], [0.0], side])


def build_borehole_mesh(level: int = 2, eps: float = 0.01, *, keep_hole_nodes: bool = False) -> HexMesh:
    """Stretched mesh of [-1,1]^3 minus the slot (-eps,eps) x [0,1] x (-eps,eps).

    The y direction is uniform with ``32 * 2**(level-2)`` cells.  With
    ``keep_hole_nodes`` the vertices inside the slot (which belong to no
    element) are kept as boundary nodes, reproducing the full tensor node
    count 51 x 33 x 51 = 85,833 at level 2.
    """
    if level not in (2, 3, 4, 5):
        raise ValueError(f"borehole level must be in 2..5, got {level}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"borehole eps must lie in (0, 1), got {eps}")
    xz = borehole_axis(level, eps)
    y = np.linspace(-1.0, 1.0, 32 * 2 ** (level - 2) + 1)
    cx = 0.5 * (xz[1:] + xz[:-1])
    cy = 0.5 * (y[1:] + y[:-1])
    in_x = np.abs(cx) < eps
    in_y = (cy > 0.0) & (cy < 1.0)
    hole = in_x[:, None, None] & in_y[None, :, None] & in_x[None, None, :]
    return _lattice_mesh(
        xz, y, xz, ~hole, "borehole", keep_all_vertices=keep_hole_nodes,
        params={"level": level, "eps": eps},
    )


def build_mesh(domain: str, *, n: int | None = None, level: int = 2, eps: float = 0.01,
               keep_hole_nodes: bool = False) -> HexMesh:
    if domain in ("cube", "manufactured"):
        return build_cube_mesh(n)
    if domain == "staircase":
        return build_staircase_mesh(n)
    if domain == "borehole":
        return build_borehole_mesh(level, eps, keep_hole_nodes=keep_hole_nodes)
    raise ValueError(f"unknown domain {domain!r}")


def element_extents(mesh: HexMesh) -> np.ndarray:
    """Edge lengths (hx, hy, hz) of each element along the reference axes."""
    v = mesh.nodes[mesh.elements_q1]
    return np.column_stack([
        np.linalg.norm(v[:, 1] - v[:, 0], axis=1),
        np.linalg.norm(v[:, 3] - v[:, 0], axis=1),
        np.linalg.norm(v[:, 4] - v[:, 0], axis=1),
    ])


def aspect_ratios(mesh: HexMesh) -> np.ndarray:
    h = element_extents(mesh)
    return h.max(axis=1) / h.min(axis=1)


def hole_aspect_ratio(mesh: HexMesh) -> float:
    """Largest aspect ratio among borehole elements touching the slot."""
    eps = mesh.params.get("eps")
    if mesh.domain_tag != "borehole" or eps is None:
        raise ValueError("hole aspect ratio is only defined for borehole meshes")
    v = mesh.nodes[mesh.elements_q1]
    tol = 1e-12
    on_slot = ((np.abs(v[..., 0]) <= eps + tol) & (np.abs(v[..., 2]) <= eps + tol)
               & (v[..., 1] >= -tol) & (v[..., 1] <= 1 + tol))
    touching = on_slot.any(axis=1)
    return float(aspect_ratios(mesh)[touching].max())
