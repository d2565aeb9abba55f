"""Triangle meshes: container, icosphere template, normals, OBJ round-trip.

Vertices live in object units with the object centered at the origin.
Faces are vertex-index triples wound counter-clockwise seen from outside
(outward normals). Template-derived meshes stay closed genus-0 manifolds;
deformations only move vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import NonManifoldError, ObjParseError

__all__ = [
    "Mesh",
    "MeshTopology",
    "make_icosphere",
    "icosphere_levels",
    "subdivide_midpoint",
    "vertex_normals",
    "displace_along_normals",
    "make_box",
    "export_obj",
    "import_obj",
]


@dataclass
class Mesh:
    """Vertices (V,3) float64, faces (F,3) int64, optional colors (V,3) in [0,1]."""

    vertices: np.ndarray
    faces: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64)
        self.faces = np.ascontiguousarray(self.faces, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError(f"vertices must be (V,3), got {self.vertices.shape}")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError(f"faces must be (F,3), got {self.faces.shape}")
        if self.colors is not None:
            self.colors = np.ascontiguousarray(self.colors, dtype=np.float64)
        self.validate()

    def validate(self):
        v, f = len(self.vertices), self.faces
        if len(f) and (f.min() < 0 or f.max() >= v):
            raise ValueError("face index out of range")
        if len(f):
            degen = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
            if degen.any():
                raise ValueError(f"degenerate face at index {int(np.argmax(degen))}")
        if self.colors is not None:
            if self.colors.shape != (v, 3):
                raise ValueError(
                    f"colors must be ({v},3), got {self.colors.shape}"
                )
            if self.colors.min() < -1e-9 or self.colors.max() > 1 + 1e-9:
                raise ValueError("colors must lie in [0,1]")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def bounding_radius(self) -> float:
        if not len(self.vertices):
            return 0.0
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def copy(self) -> "Mesh":
        colors = None if self.colors is None else self.colors.copy()
        return Mesh(self.vertices.copy(), self.faces.copy(), colors)

    def topology(self) -> "MeshTopology":
        return _topology_for(self.faces.tobytes(), self.faces.shape, self.n_vertices)


class MeshTopology:
    """Edge/adjacency structure derived from a face array (geometry-free)."""

    def __init__(self, faces: np.ndarray, n_vertices: int):
        self.n_vertices = n_vertices
        self.faces = faces
        halfedges = faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = np.sort(halfedges, axis=1)
        edges, inverse, counts = np.unique(
            keys, axis=0, return_inverse=True, return_counts=True
        )
        self.edges = edges  # (E,2), sorted vertex pairs
        self.edge_counts = counts  # faces incident to each edge
        # face pairs across interior edges (order arbitrary but deterministic)
        face_of_halfedge = np.repeat(np.arange(len(faces)), 3)
        order = np.argsort(inverse, kind="stable")
        sorted_edges = inverse[order]
        sorted_faces = face_of_halfedge[order]
        starts = np.searchsorted(sorted_edges, np.arange(len(edges)))
        interior = np.flatnonzero(counts == 2)
        self.interior_edge_faces = np.stack(
            [sorted_faces[starts[interior]], sorted_faces[starts[interior] + 1]],
            axis=1,
        )
        self.interior_edges = edges[interior]
        # vertex neighborhood in CSR form (from unique undirected edges)
        both = np.concatenate([edges, edges[:, ::-1]])
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        self.neighbor_offsets = np.searchsorted(
            both[:, 0], np.arange(n_vertices + 1)
        )
        self.neighbor_index = both[:, 1].copy()

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + len(self.faces)

    def is_closed_manifold(self) -> bool:
        return bool(len(self.edge_counts) and (self.edge_counts == 2).all())

    def max_edge_valence(self) -> int:
        return int(self.edge_counts.max()) if len(self.edge_counts) else 0

    def vertex_degrees(self) -> np.ndarray:
        return np.diff(self.neighbor_offsets)


@lru_cache(maxsize=64)
def _topology_for(face_bytes: bytes, shape, n_vertices: int) -> MeshTopology:
    faces = np.frombuffer(face_bytes, dtype=np.int64).reshape(shape)
    return MeshTopology(faces, n_vertices)


# Icosahedron: vertices at cyclic permutations of (0, ±1, ±φ), normalized.
_PHI = (1.0 + math.sqrt(5.0)) / 2.0
_ICO_VERTS = np.array(
    [
        [-1, _PHI, 0], [1, _PHI, 0], [-1, -_PHI, 0], [1, -_PHI, 0],
        [0, -1, _PHI], [0, 1, _PHI], [0, -1, -_PHI], [0, 1, -_PHI],
        [_PHI, 0, -1], [_PHI, 0, 1], [-_PHI, 0, -1], [-_PHI, 0, 1],
    ],
    dtype=np.float64,
)
_ICO_FACES = np.array(
    [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ],
    dtype=np.int64,
)


def subdivide_midpoint(vertices: np.ndarray, faces: np.ndarray):
    """Split every face in four via edge midpoints.

    Returns (vertices, faces, parents) where parents is an (N,2) index array
    giving, for each NEW vertex, the two endpoints of the edge it bisects.
    Original vertices keep their indices.
    """
    topo = MeshTopology(faces, len(vertices))
    edges = topo.edges
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    new_verts = np.concatenate([vertices, midpoints])
    edge_lookup = {
        (int(a), int(b)): len(vertices) + i for i, (a, b) in enumerate(edges)
    }

    def mid(a, b):
        return edge_lookup[(a, b) if a < b else (b, a)]

    new_faces = []
    for a, b, c in faces:
        a, b, c = int(a), int(b), int(c)
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return new_verts, np.array(new_faces, dtype=np.int64), edges.copy()


def icosphere_levels(subdivisions: int):
    """Vertex/face arrays for every subdivision level up to `subdivisions`.

    Returns a list of (vertices, faces, parents) per level; parents is None
    at level 0 and otherwise maps each new vertex to its two parent indices
    in the previous level. Vertices are projected onto the unit sphere.
    """
    if not (0 <= subdivisions <= 5):
        raise ValueError(f"subdivisions must be in [0,5], got {subdivisions}")
    verts = _ICO_VERTS / np.linalg.norm(_ICO_VERTS[0])
    faces = _ICO_FACES
    levels = [(verts, faces, None)]
    for _ in range(subdivisions):
        verts, faces, parents = subdivide_midpoint(verts, faces)
        verts = verts / np.linalg.norm(verts, axis=1, keepdims=True)
        levels.append((verts, faces, parents))
    return levels


def make_icosphere(subdivisions: int) -> Mesh:
    """Unit-radius icosphere centered at the origin; 10*4^s + 2 vertices."""
    verts, faces, _ = icosphere_levels(subdivisions)[-1]
    return Mesh(verts.copy(), faces.copy())


def make_box(half_extents=(1.0, 1.0, 1.0)) -> Mesh:
    """Axis-aligned box with the tetrahedral diagonal pattern.

    The diagonals are chosen so every corner accumulates equal face area
    per axis, which makes area-weighted corner normals point along
    (+-1,+-1,+-1)/sqrt(3).
    """
    hx, hy, hz = half_extents
    corners = np.array(
        [[sx * hx, sy * hy, sz * hz]
         for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)],
        dtype=np.float64,
    )
    # index = sx*4 + sy*2 + sz with s in {0,1}; every face diagonal joins
    # the even-parity corners {0,3,5,6}, balancing per-corner area
    faces = np.array(
        [
            [0, 1, 3], [0, 3, 2],  # -x
            [4, 6, 5], [6, 7, 5],  # +x
            [0, 4, 5], [0, 5, 1],  # -y
            [2, 3, 6], [3, 7, 6],  # +y
            [0, 2, 6], [0, 6, 4],  # -z
            [1, 5, 3], [5, 7, 3],  # +z
        ],
        dtype=np.int64,
    )
    return Mesh(corners, faces)


def face_normals(mesh: Mesh, normalize: bool = True) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]])
    if not normalize:
        return cross  # magnitude = 2 * face area
    norms = np.linalg.norm(cross, axis=1, keepdims=True)
    return cross / np.maximum(norms, 1e-300)


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Area-weighted average of incident face normals, unit length."""
    weighted = face_normals(mesh, normalize=False)
    acc = np.zeros_like(mesh.vertices)
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], weighted)
    norms = np.linalg.norm(acc, axis=1)
    bad = norms < 1e-12
    if bad.any():
        raise ValueError(
            f"vertex {int(np.argmax(bad))} has zero accumulated normal"
        )
    return acc / norms[:, None]


def displace_along_normals(mesh: Mesh, d) -> Mesh:
    """Move each vertex by d[i] along its outward normal; faces unchanged."""
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    if len(d) != mesh.n_vertices:
        raise ValueError(
            f"need {mesh.n_vertices} displacements, got {len(d)}"
        )
    normals = vertex_normals(mesh)
    out = mesh.copy()
    out.vertices = mesh.vertices + d[:, None] * normals
    return out


def check_closed_manifold(mesh: Mesh, genus_zero: bool = True):
    """Raise NonManifoldError unless every edge has exactly 2 faces
    (and, optionally, V - E + F == 2)."""
    topo = mesh.topology()
    if not topo.is_closed_manifold():
        raise NonManifoldError(
            f"mesh is not a closed manifold (max edge valence "
            f"{topo.max_edge_valence()})"
        )
    if genus_zero and topo.euler_characteristic() != 2:
        raise NonManifoldError(
            f"expected genus 0 (Euler characteristic 2), got "
            f"{topo.euler_characteristic()}"
        )


def signed_volume(mesh: Mesh) -> float:
    """Sum of signed tetrahedron volumes; positive for outward winding."""
    v = mesh.vertices
    f = mesh.faces
    return float(
        np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]])).sum()
        / 6.0
    )


def merge_meshes(parts: list[Mesh]) -> Mesh:
    """Concatenate meshes into one (possibly multi-component) mesh."""
    verts, faces, offset = [], [], 0
    for p in parts:
        verts.append(p.vertices)
        faces.append(p.faces + offset)
        offset += p.n_vertices
    return Mesh(np.concatenate(verts), np.concatenate(faces))


def export_obj(mesh: Mesh) -> bytes:
    """Wavefront OBJ text; colored vertices use extended 6-number v lines."""
    lines = []
    if mesh.colors is None:
        for x, y, z in mesh.vertices:
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g}")
    else:
        for (x, y, z), (r, g, b) in zip(mesh.vertices, mesh.colors):
            lines.append(f"v {x:.9g} {y:.9g} {z:.9g} {r:.9g} {g:.9g} {b:.9g}")
    for a, b, c in mesh.faces:
        lines.append(f"f {a + 1} {b + 1} {c + 1}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def import_obj(data: bytes) -> Mesh:
    """Parse OBJ text (triangles only, 1-based indices, optional colors)."""
    verts: list[list[float]] = []
    colors: list[list[float]] = []
    faces: list[list[int]] = []
    for lineno, raw in enumerate(data.decode("utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            vals = parts[1:]
            if len(vals) not in (3, 6):
                raise ObjParseError(
                    lineno, f"vertex line needs 3 or 6 numbers, got {len(vals)}"
                )
            try:
                nums = [float(t) for t in vals]
            except ValueError as exc:
                raise ObjParseError(lineno, f"bad number: {exc}") from None
            verts.append(nums[:3])
            if len(nums) == 6:
                colors.append(nums[3:])
        elif tag == "f":
            idx = []
            for token in parts[1:]:
                head = token.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ObjParseError(lineno, f"bad face index {token!r}") from None
                if i == 0:
                    raise ObjParseError(lineno, "OBJ face indices are 1-based")
                idx.append(i - 1 if i > 0 else len(verts) + i)
            if len(idx) != 3:
                raise ObjParseError(
                    lineno, f"only triangles supported, got {len(idx)} vertices"
                )
            faces.append(idx)
        # other tags (vn, vt, mtllib, o, g, s, usemtl) are ignored
    if colors and len(colors) != len(verts):
        raise ObjParseError(0, "some vertices have colors and some do not")
    try:
        return Mesh(
            np.array(verts, dtype=np.float64).reshape(-1, 3),
            np.array(faces, dtype=np.int64).reshape(-1, 3),
            np.array(colors, dtype=np.float64) if colors else None,
        )
    except ValueError as exc:
        raise ObjParseError(0, str(exc)) from None
