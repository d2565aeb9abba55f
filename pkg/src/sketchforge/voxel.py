"""Watertight-mesh voxelization and occupancy-grid IoU.

A cell is occupied iff its center is inside the mesh by ray-crossing
parity along +x. Ties (ray grazing an edge/vertex or an edge-on triangle)
are resolved deterministically by re-casting that column with the ray
offset by a half-cell epsilon.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import NotWatertightError
from .mesh import Mesh

__all__ = [
    "VoxelBounds",
    "VoxelGrid",
    "mesh_bounds",
    "voxelize",
    "voxel_iou",
    "save_voxels",
    "load_voxels",
]

_MAGIC = b"SFVX"
_VERSION = 1


@dataclass(frozen=True)
class VoxelBounds:
    """Axis-aligned cube: center (3,) and edge length."""

    center: tuple[float, float, float]
    edge: float

    def __post_init__(self):
        if not self.edge > 0:
            raise ValueError("bounds edge must be positive")

    def cell_size(self, resolution: int) -> float:
        return self.edge / resolution

    def cell_centers(self, resolution: int) -> np.ndarray:
        """(R,) coordinates along one axis relative to the cube min corner."""
        lo = -0.5 * self.edge
        step = self.edge / resolution
        return lo + (np.arange(resolution) + 0.5) * step

    def close_to(self, other: "VoxelBounds", tol: float = 1e-9) -> bool:
        return (
            abs(self.edge - other.edge) <= tol * max(1.0, self.edge)
            and max(abs(a - b) for a, b in zip(self.center, other.center))
            <= tol * max(1.0, self.edge)
        )


@dataclass
class VoxelGrid:
    resolution: int
    occupancy: np.ndarray  # (R,R,R) bool, index [ix,iy,iz]
    bounds: VoxelBounds

    def __post_init__(self):
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        r = self.resolution
        if self.occupancy.shape != (r, r, r):
            raise ValueError(
                f"occupancy must be ({r},{r},{r}), got {self.occupancy.shape}"
            )


def mesh_bounds(mesh: Mesh, scale: float = 1.05) -> VoxelBounds:
    """Cube covering the mesh bounding box, scaled by `scale`."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    edge = float((hi - lo).max()) * scale
    if edge <= 0:
        raise ValueError("mesh has zero extent")
    return VoxelBounds(tuple(float(c) for c in center), edge)


def _column_hits(y0, z0, va, vb, vc, tol):
    """X coordinates where the +x ray at (y0,z0) crosses triangles.

    Returns (hit_xs, ambiguous) where ambiguous means some test was within
    tol of zero and the column must be re-cast with an offset.
    """
    ay, az = va[:, 1], va[:, 2]
    by, bz = vb[:, 1], vb[:, 2]
    cy, cz = vc[:, 1], vc[:, 2]
    e_ab = (by - ay) * (z0 - az) - (bz - az) * (y0 - ay)
    e_bc = (cy - by) * (z0 - bz) - (cz - bz) * (y0 - by)
    e_ca = (ay - cy) * (z0 - cz) - (az - cz) * (y0 - cy)
    area = (by - ay) * (cz - az) - (bz - az) * (cy - ay)
    pos = (e_ab >= 0) & (e_bc >= 0) & (e_ca >= 0)
    neg = (e_ab <= 0) & (e_bc <= 0) & (e_ca <= 0)
    inside = (pos | neg) & (np.abs(area) > tol)
    near_edge = (
        (np.abs(e_ab) < tol) | (np.abs(e_bc) < tol) | (np.abs(e_ca) < tol)
    )
    degenerate_cover = (np.abs(area) <= tol) & (pos | neg)
    ambiguous = bool((inside & near_edge).any() or degenerate_cover.any())
    if not inside.any():
        return np.empty(0), ambiguous
    idx = np.flatnonzero(inside)
    lam_a = e_bc[idx] / area[idx]
    lam_b = e_ca[idx] / area[idx]
    lam_c = e_ab[idx] / area[idx]
    xs = lam_a * va[idx, 0] + lam_b * vb[idx, 0] + lam_c * vc[idx, 0]
    return xs, ambiguous


def voxelize(
    mesh: Mesh, resolution: int, bounds: VoxelBounds | None = None
) -> VoxelGrid:
    """Occupancy grid of a watertight mesh at the given resolution.

    Bounds default to the mesh bounding cube scaled by 1.05; pass explicit
    bounds to voxelize several meshes into a comparable frame.
    """
    if not 8 <= resolution <= 128:
        raise ValueError(f"resolution must be in [8,128], got {resolution}")
    topo = mesh.topology()
    if not topo.is_closed_manifold():
        raise NotWatertightError(
            "mesh has boundary or non-manifold edges; parity is undefined"
        )
    if bounds is None:
        bounds = mesh_bounds(mesh)
    r = resolution
    centers = bounds.cell_centers(r)
    cy = bounds.center[1] + centers
    cz = bounds.center[2] + centers
    cx = bounds.center[0] + centers
    va = mesh.vertices[mesh.faces[:, 0]]
    vb = mesh.vertices[mesh.faces[:, 1]]
    vc = mesh.vertices[mesh.faces[:, 2]]
    tol = 1e-12 * max(1.0, bounds.edge) ** 2
    # tie-break epsilon at half-cell scale: large enough to leave the
    # degenerate set, small enough to stay within resolvable features
    eps = 0.5 * bounds.cell_size(r) * 1e-3
    offsets = [
        (0.0, 0.0),
        (eps, 0.0),
        (0.0, eps),
        (eps, eps),
        (0.61803398875 * eps, 1.61803398875 * eps),
    ]
    occ = np.zeros((r, r, r), dtype=bool)
    for iy in range(r):
        for iz in range(r):
            for dy, dz in offsets:
                xs, ambiguous = _column_hits(
                    cy[iy] + dy, cz[iz] + dz, va, vb, vc, tol
                )
                if not ambiguous:
                    break
            if len(xs):
                occ[:, iy, iz] = ((xs[None, :] > cx[:, None]).sum(axis=1) % 2) == 1
    return VoxelGrid(r, occ, bounds)


def voxel_iou(a: VoxelGrid, b: VoxelGrid) -> float:
    """|a AND b| / |a OR b|; 1.0 when both grids are empty."""
    if a.resolution != b.resolution:
        raise ValueError(
            f"resolution mismatch: {a.resolution} vs {b.resolution}"
        )
    if not a.bounds.close_to(b.bounds):
        raise ValueError("voxel grids have different bounds")
    union = int(np.logical_or(a.occupancy, b.occupancy).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(a.occupancy, b.occupancy).sum())
    return inter / union


def save_voxels(grid: VoxelGrid) -> bytes:
    """16-byte header (magic, version, R, reserved) + row-major packed bits."""
    header = _MAGIC + struct.pack("<III", _VERSION, grid.resolution, 0)
    bits = np.packbits(grid.occupancy.reshape(-1).astype(np.uint8))
    return header + bits.tobytes()


def load_voxels(data: bytes, bounds: VoxelBounds | None = None) -> VoxelGrid:
    if len(data) < 16 or data[:4] != _MAGIC:
        raise ValueError("not a voxel blob (bad magic)")
    version, r, _ = struct.unpack("<III", data[4:16])
    if version != _VERSION:
        raise ValueError(f"unsupported voxel format version {version}")
    n = r * r * r
    bits = np.unpackbits(
        np.frombuffer(data[16:], dtype=np.uint8), count=n
    ).astype(bool)
    if bounds is None:
        bounds = VoxelBounds((0.0, 0.0, 0.0), 1.0)
    return VoxelGrid(r, bits.reshape(r, r, r), bounds)
