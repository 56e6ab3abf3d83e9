"""Mesh files, VTK export, line sampling and CSV tables.

The binary mesh layout (little endian) is documented in ``docs/formats.md``::

    8 bytes   magic b"HEXMESH\\0"
    u32       format version
    u32       length L of the JSON header
    L bytes   JSON header (domain_tag, counts, params)
    f8        nodes (n_nodes, 3)
    i4        elements_q2 (n_elements, 27)
    i4        boundary_nodes (n_boundary_nodes,)
    i4        boundary_faces (n_boundary_faces, 2), local face 1..6
    u1        vertex_mask (n_nodes,)
"""
from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .mesh import HexMesh
from .reference import basis_eval

MAGIC = b"HEXMESH\0"
FORMAT_VERSION = 1
VTK_HEXAHEDRON = 12


class MeshFormatError(ValueError):
    pass


def write_mesh(mesh: HexMesh, path) -> None:
    header = {
        "version": FORMAT_VERSION,
        "domain_tag": mesh.domain_tag,
        "counts": {
            "nodes": mesh.n_nodes,
            "elements": mesh.n_elements,
            "boundary_nodes": len(mesh.boundary_nodes),
            "boundary_faces": len(mesh.boundary_faces),
        },
        "params": mesh.params,
    }
    raw = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        fh.write(np.ascontiguousarray(mesh.nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(mesh.elements_q2, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(mesh.boundary_nodes, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(mesh.boundary_faces, dtype="<i4").tobytes())
        fh.write(np.ascontiguousarray(mesh.vertex_mask, dtype="u1").tobytes())


def read_mesh(path) -> HexMesh:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise MeshFormatError(f"{path}: not a hexpde mesh file")
    version, hlen = struct.unpack_from("<II", data, 8)
    if version != FORMAT_VERSION:
        raise MeshFormatError(f"{path}: unsupported format version {version}")
    off = 16
    header = json.loads(data[off:off + hlen])
    off += hlen
    c = header["counts"]

    def take(dtype, shape):
        nonlocal off
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=off).reshape(shape)
        off += arr.nbytes
        return arr

    try:
        nodes = take("<f8", (c["nodes"], 3)).astype(float)
        elems = take("<i4", (c["elements"], 27)).astype(np.int64)
        bnodes = take("<i4", (c["boundary_nodes"],)).astype(np.int64)
        bfaces = take("<i4", (c["boundary_faces"], 2)).astype(np.int64)
        vmask = take("u1", (c["nodes"],)).astype(bool)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: truncated mesh file") from exc
    if off != len(data):
        raise MeshFormatError(f"{path}: {len(data) - off} trailing bytes")
    if elems.size and (elems.min() < 0 or elems.max() >= len(nodes)):
        raise MeshFormatError(f"{path}: element node index out of range")
    return HexMesh(nodes, elems, bnodes, bfaces, header["domain_tag"], vmask, header.get("params", {}))


def write_mesh_text(mesh: HexMesh, path) -> None:
    """Plain-text dump for debugging; one node or element per line."""
    with open(path, "w") as fh:
        fh.write(f"# hexpde mesh text v{FORMAT_VERSION} domain={mesh.domain_tag}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y, z in mesh.nodes:
            fh.write(f"{x!r} {y!r} {z!r}\n")
        fh.write(f"elements {mesh.n_elements}\n")
        for row in mesh.elements_q2:
            fh.write(" ".join(map(str, row)) + "\n")
        fh.write(f"boundary_nodes {len(mesh.boundary_nodes)}\n")
        fh.write(" ".join(map(str, mesh.boundary_nodes)) + "\n")
        fh.write(f"boundary_faces {len(mesh.boundary_faces)}\n")
        for e, f in mesh.boundary_faces:
            fh.write(f"{e} {f}\n")


def vertex_values(mesh: HexMesh, u, degree: int) -> np.ndarray:
    """Restrict a nodal vector to the Q1 vertex numbering."""
    u = np.asarray(u, dtype=float)
    if degree == 2:
        return u[np.flatnonzero(mesh.vertex_mask)]
    return u


def export_vtk(mesh: HexMesh, path, nodal_field=None, cell_field=None, *, degree: int = 1,
               point_name: str = "u", cell_name: str = "eta") -> None:
    """Legacy ASCII unstructured grid with 8-node hexahedra."""
    coords, cells, _ = mesh.dofs(1)
    if nodal_field is not None:
        nodal_field = vertex_values(mesh, nodal_field, degree)
        if nodal_field.shape != (len(coords),):
            raise ValueError(f"nodal field has {nodal_field.shape[0]} values, mesh has {len(coords)} vertices")
    if cell_field is not None:
        cell_field = np.asarray(cell_field, dtype=float)
        if cell_field.shape != (len(cells),):
            raise ValueError(f"cell field has {cell_field.shape[0]} values, mesh has {len(cells)} cells")
    lines = ["# vtk DataFile Version 3.0", f"hexpde {mesh.domain_tag}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {len(coords)} double"]
    lines += [f"{x!r} {y!r} {z!r}" for x, y, z in coords]
    lines.append(f"CELLS {len(cells)} {9 * len(cells)}")
    lines += ["8 " + " ".join(map(str, c)) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(VTK_HEXAHEDRON)] * len(cells)
    if nodal_field is not None:
        lines += [f"POINT_DATA {len(coords)}", f"SCALARS {point_name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in nodal_field]
    if cell_field is not None:
        lines += [f"CELL_DATA {len(cells)}", f"SCALARS {cell_name} double 1", "LOOKUP_TABLE default"]
        lines += [repr(float(v)) for v in cell_field]
    Path(path).write_text("\n".join(lines) + "\n")


def _inverse_map(corners, x, iters=20, tol=1e-12):
    """Newton solve for reference coordinates of ``x`` in trilinear elements."""
    xi = np.zeros((len(x), 3))
    for _ in range(iters):
        b = basis_eval(1, xi)
        # one point per element: evaluate row k with element k
        phys = np.einsum("kb,kbi->ki", b.values, corners)
        jac = np.einsum("kbi,kbj->kij", corners, b.ref_gradients)
        r = x - phys
        step = np.linalg.solve(jac, r[..., None])[..., 0]
        xi += step
        if np.abs(step).max() < tol:
            break
    return xi


def locate(mesh: HexMesh, points, candidates: int = 16, slack: float = 1e-9):
    """Element index and reference coordinates for each point (-1 if outside)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    corners = mesh.nodes[mesh.elements_q1]
    tree = cKDTree(corners.mean(axis=1))
    k = min(candidates, mesh.n_elements)
    _, cand = tree.query(pts, k=k)
    cand = cand.reshape(len(pts), k)
    elem = np.full(len(pts), -1, dtype=np.int64)
    ref = np.zeros((len(pts), 3))
    for j in range(k):
        todo = np.flatnonzero(elem < 0)
        if todo.size == 0:
            break
        e = cand[todo, j]
        xi = _inverse_map(corners[e], pts[todo])
        ok = np.all(np.abs(xi) <= 1.0 + slack, axis=1)
        elem[todo[ok]] = e[ok]
        ref[todo[ok]] = np.clip(xi[ok], -1.0, 1.0)
    return elem, ref


def evaluate(mesh: HexMesh, u, points, degree: int = 1) -> np.ndarray:
    """Finite element function at physical points; NaN outside the mesh."""
    elem, ref = locate(mesh, points)
    _, edofs, _ = mesh.dofs(degree)
    u = np.asarray(u, dtype=float)
    out = np.full(len(elem), np.nan)
    inside = elem >= 0
    if inside.any():
        vals = basis_eval(degree, ref[inside]).values
        out[inside] = np.einsum("kb,kb->k", vals, u[edofs[elem[inside]]])
    return out


def line_sample(mesh: HexMesh, u, axis: str = "x", fixed=(0.0, 0.0), samples: int = 101,
                degree: int = 1, lo: float = -1.0, hi: float = 1.0):
    """Sample ``u`` on an axis-parallel line.

    ``fixed`` holds the other two coordinates in (x, y, z) order.  Returns
    ``(t, values, inside)``; points outside the domain get NaN and
    ``inside = False``.
    """
    a = "xyz".index(axis)
    t = np.linspace(lo, hi, samples)
    pts = np.empty((samples, 3))
    others = [i for i in range(3) if i != a]
    pts[:, a] = t
    pts[:, others[0]], pts[:, others[1]] = fixed
    vals = evaluate(mesh, u, pts, degree)
    return t, vals, ~np.isnan(vals)


def write_line_csv(path, axis, t, values, inside) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "value", "inside"])
        for ti, v, ok in zip(t, values, inside):
            w.writerow([repr(float(ti)), repr(float(v)) if ok else "", int(ok)])


def write_csv(path, header, rows) -> None:
    """CSV with floats written at full (round-trip) precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, [row for row in r]
