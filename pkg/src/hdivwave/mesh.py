"""Hybrid triangle/parallelogram meshes with oriented edge topology.

A mesh stores vertices, counterclockwise cells of three or four
vertices, and derived edge tables.  Edges are undirected vertex pairs
``(lo, hi)`` with ``lo < hi``; the global edge normal is the unit vector
from lo to hi rotated 90 degrees clockwise.  Each cell records its
incident edges together with a sign telling whether the cell's outward
normal on that edge agrees with the global normal.

Structured generator families produce nested refinements with nominal
mesh size halving per level; the perturbed family jitters interior
vertices of a triangle mesh to break nestedness between levels.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

FAMILIES = ("structured-triangle", "structured-quad", "hybrid", "perturbed")


class MeshError(RuntimeError):
    pass


@dataclass(frozen=True)
class MeshFamily:
    """A refinement family: generator kind plus fixed build parameters.

    ``base_divisions`` sets the number of cells per axis at level 0, so
    the nominal mesh size at level ``l`` is ``width / (base_divisions *
    2**l)``.  ``perturbation`` (fraction of h, only for the perturbed
    kind) must stay below 0.5 to keep cells from degenerating.
    """

    kind: str
    box: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0)
    base_divisions: int = 2
    perturbation: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in FAMILIES:
            raise MeshError(f"unknown mesh family {self.kind!r}; pick one of {FAMILIES}")
        if self.base_divisions < 1:
            raise MeshError("base_divisions must be at least 1")
        if self.kind == "perturbed" and not (0.0 <= self.perturbation < 0.5):
            raise MeshError(
                f"perturbation {self.perturbation} out of range; must be in [0, 0.5)")

    def h_at(self, level: int) -> float:
        x0, y0, x1, y1 = self.box
        return max(x1 - x0, y1 - y0) / (self.base_divisions * 2 ** level)


class HybridMesh:
    """Immutable conforming mesh of triangles and/or parallelograms.

    Parameters
    ----------
    vertices : (n, 2) float array
    cells : sequence of vertex-index tuples, length 3 (triangle) or
        4 (parallelogram), counterclockwise
    h_nominal : optional nominal mesh size carried along for reporting
    """

    def __init__(self, vertices, cells, h_nominal: float | None = None,
                 validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshError("vertices must be an (n, 2) array")
        self.cells = [tuple(int(v) for v in c) for c in cells]
        self.h_nominal = h_nominal
        self._build_topology()
        if validate:
            self._validate()
        self.vertices.setflags(write=False)
        self.edges.setflags(write=False)

    # -- topology ------------------------------------------------------

    def _build_topology(self):
        nv = len(self.vertices)
        edge_ids: dict[tuple[int, int], int] = {}
        edge_cells: list[list[int]] = []
        cell_edges: list[list[tuple[int, int]]] = []
        for ci, cell in enumerate(self.cells):
            k = len(cell)
            if k not in (3, 4):
                raise MeshError(f"cell {ci} has {k} vertices; only 3 or 4 supported")
            if any(v < 0 or v >= nv for v in cell):
                raise MeshError(f"cell {ci} references a vertex out of range")
            entry = []
            for a, b in zip(cell, cell[1:] + cell[:1]):
                lo, hi = (a, b) if a < b else (b, a)
                eid = edge_ids.setdefault((lo, hi), len(edge_ids))
                if eid == len(edge_cells):
                    edge_cells.append([])
                edge_cells[eid].append(ci)
                sign = 1 if a == lo else -1
                entry.append((eid, sign))
            cell_edges.append(entry)
        for eid, owners in enumerate(edge_cells):
            if len(owners) > 2:
                lo, hi = next(k for k, v in edge_ids.items() if v == eid)
                raise MeshError(
                    f"non-manifold edge ({lo}, {hi}) shared by {len(owners)} cells")
        self.edges = np.array(sorted(edge_ids, key=edge_ids.get), dtype=int)
        if len(self.edges) == 0:
            raise MeshError("mesh has no cells")
        self.cell_edges = cell_edges
        self.edge_cells = edge_cells
        self.boundary_edges = np.array(
            [eid for eid, owners in enumerate(edge_cells) if len(owners) == 1],
            dtype=int)
        self.vertex_edges = [[] for _ in range(nv)]
        for eid, (lo, hi) in enumerate(self.edges):
            self.vertex_edges[lo].append(eid)
            self.vertex_edges[hi].append(eid)

    # -- derived geometry ----------------------------------------------

    def edge_vectors(self) -> np.ndarray:
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.edge_vectors(), axis=1)

    def edge_normals(self) -> np.ndarray:
        """Global unit normals: lo->hi tangent rotated 90 deg clockwise."""
        t = self.edge_vectors()
        t = t / np.linalg.norm(t, axis=1, keepdims=True)
        return np.column_stack([t[:, 1], -t[:, 0]])

    def cell_area(self, ci: int) -> float:
        v = self.vertices[list(self.cells[ci])]
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def cell_diameter(self, ci: int) -> float:
        v = self.vertices[list(self.cells[ci])]
        return max(np.linalg.norm(v[i] - v[j])
                   for i in range(len(v)) for j in range(i + 1, len(v)))

    def quasi_uniformity(self) -> float:
        d = [self.cell_diameter(c) for c in range(len(self.cells))]
        return max(d) / min(d)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def triangle_ids(self) -> list[int]:
        return [i for i, c in enumerate(self.cells) if len(c) == 3]

    def quad_ids(self) -> list[int]:
        return [i for i, c in enumerate(self.cells) if len(c) == 4]

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edges].ravel())

    def h_effective(self) -> float:
        """Stored nominal h, or the largest edge length as a stand-in."""
        if self.h_nominal is not None:
            return self.h_nominal
        return float(self.edge_lengths().max())

    # -- validation ----------------------------------------------------

    def _validate(self):
        for ci, cell in enumerate(self.cells):
            area = self.cell_area(ci)
            if area <= 0.0:
                raise MeshError(f"cell {ci} has non-positive area {area:.3e}")
            if len(cell) == 4:
                v = self.vertices[list(cell)]
                closure = v[0] - v[1] + v[2] - v[3]
                if np.linalg.norm(closure) > 1e-12 * self.cell_diameter(ci):
                    raise MeshError(
                        f"cell {ci} is not a parallelogram "
                        f"(closure defect {np.linalg.norm(closure):.3e})")


# -- structured generators ---------------------------------------------


def _grid(box, n):
    x0, y0, x1, y1 = box
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: j * (n + 1) + i
    return verts, vid


def _structured_quad(box, n):
    verts, vid = _grid(box, n)
    cells = []
    for j in range(n):
        for i in range(n):
            cells.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)))
    return verts, cells


def _structured_triangle(box, n):
    verts, vid = _grid(box, n)
    cells = []
    for j in range(n):
        for i in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((a, b, c))
            cells.append((a, c, d))
    return verts, cells


def _hybrid(box, n):
    verts, vid = _grid(box, n)
    cells = []
    for j in range(n):
        for i in range(n):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if i < n // 2:
                cells.append((a, b, c, d))
            else:
                cells.append((a, b, c))
                cells.append((a, c, d))
    return verts, cells


def generate(family: MeshFamily, level: int) -> HybridMesh:
    """Build the mesh of a family at a refinement level."""
    if level < 0:
        raise MeshError("refinement level must be non-negative")
    n = family.base_divisions * 2 ** level
    h = family.h_at(level)
    if family.kind == "structured-quad":
        verts, cells = _structured_quad(family.box, n)
    elif family.kind == "structured-triangle":
        verts, cells = _structured_triangle(family.box, n)
    elif family.kind == "hybrid":
        verts, cells = _hybrid(family.box, n)
    elif family.kind == "perturbed":
        verts, cells = _structured_triangle(family.box, n)
        mesh0 = HybridMesh(verts, cells, h_nominal=h, validate=False)
        interior = np.setdiff1d(np.arange(len(verts)), mesh0.boundary_vertices())
        rng = np.random.default_rng(1_000_003 * family.seed + level)
        # uniform in the disc so the displacement itself stays <= p*h
        radius = family.perturbation * h * np.sqrt(rng.random(len(interior)))
        angle = rng.uniform(0.0, 2.0 * np.pi, len(interior))
        verts = verts.copy()
        verts[interior] += radius[:, None] * np.column_stack(
            [np.cos(angle), np.sin(angle)])
    else:  # pragma: no cover - guarded by MeshFamily
        raise MeshError(f"unknown family kind {family.kind!r}")
    return HybridMesh(verts, cells, h_nominal=h)


# -- plain-text mesh files ---------------------------------------------


def save_mesh(mesh: HybridMesh, path) -> None:
    """Write a mesh in the plain-text format (header, vertices, cells)."""
    lines = [f"vertices {mesh.n_vertices} cells {mesh.n_cells}"]
    for x, y in mesh.vertices:
        lines.append(f"{float(x)!r} {float(y)!r}")
    for cell in mesh.cells:
        tag = "tri" if len(cell) == 3 else "quad"
        lines.append(tag + " " + " ".join(str(int(v)) for v in cell))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_mesh(path) -> HybridMesh:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 4 or head[0] != "vertices" or head[2] != "cells":
        raise MeshError(f"bad mesh header: {lines[0]!r}")
    nv, nc = int(head[1]), int(head[3])
    if len(lines) != 1 + nv + nc:
        raise MeshError(f"expected {1 + nv + nc} lines, found {len(lines)}")
    verts = np.array([[float(t) for t in ln.split()] for ln in lines[1:1 + nv]])
    cells = []
    for ln in lines[1 + nv:]:
        parts = ln.split()
        if parts[0] == "tri" and len(parts) == 4:
            cells.append(tuple(int(p) for p in parts[1:]))
        elif parts[0] == "quad" and len(parts) == 5:
            cells.append(tuple(int(p) for p in parts[1:]))
        else:
            raise MeshError(f"bad cell line: {ln!r}")
    return HybridMesh(verts, cells)
