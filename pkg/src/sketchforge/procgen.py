"""Procedural shapes and the desk-scale dataset generator.

Five categories: box, ellipsoid, cylinder, table (top slab + 4 legs), lamp
(base + pole + shade cone). Instance parameters are sampled from the
documented ranges below, seeded per (dataset seed, category, index).

Every category carries two orientation-fixed asymmetries with different
height profiles (a linear-in-height lean toward +x and a quadratic or
offset feature toward +z). Together they make the full 360-degree azimuth
observable from a single silhouette; with plain symmetric primitives the
azimuth would only be recoverable modulo 180 degrees and no predictor
could beat ~90 degrees mean error.

Dataset directory layout (one subdirectory per instance):
    <category>_<index>/mesh.obj      ground-truth mesh
                       sketch.png    filled silhouette, stroke=0 convention
                       edges.png     boundary-only variant
                       voxels.bin    occupancy at R=32, SFVX format
                       meta.json     {category, azimuth_deg, elevation_deg,
                                      distance}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .camera import CameraPose, CANONICAL_DISTANCE, ELEVATION_RANGE
from .mesh import Mesh, make_icosphere, merge_meshes, signed_volume
from .render import RenderConfig, image_to_png, png_to_gray, render_silhouette
from .voxel import voxelize, save_voxels

__all__ = [
    "CATEGORIES",
    "DatasetConfig",
    "DatasetInstance",
    "make_instance",
    "exemplar_mesh",
    "render_sketch_mask",
    "boundary_mask",
    "generate_dataset",
    "load_dataset",
]

CATEGORIES = ("box", "ellipsoid", "cylinder", "table", "lamp")

# words the toy embedding calibrates against a procedural stand-in
EXEMPLAR_CATEGORY = {
    "car": "box", "sofa": "box", "airplane": "ellipsoid", "bench": "box",
    "display": "box", "chair": "table", "table": "table", "telephone": "box",
    "cabinet": "box", "loudspeaker": "cylinder", "watercraft": "ellipsoid",
    "lamp": "lamp", "rifle": "cylinder",
    "box": "box", "cube": "box", "ellipsoid": "ellipsoid", "egg": "ellipsoid",
    "cylinder": "cylinder", "tube": "cylinder",
    "sphere": "sphere", "ball": "sphere",
}


def _ring_stack(rings: list[np.ndarray]) -> Mesh:
    """Closed mesh from stacked vertex rings (equal size) plus cap fans.

    Winding is fixed up by sign of the enclosed volume, so callers can
    supply rings in either rotational order.
    """
    m = len(rings[0])
    verts = [np.asarray(r, dtype=np.float64) for r in rings]
    flat = np.concatenate(verts)
    faces = []
    for r in range(len(rings) - 1):
        base = r * m
        for i in range(m):
            j = (i + 1) % m
            a, b = base + i, base + j
            c, d = base + m + j, base + m + i
            faces += [[a, b, c], [a, c, d]]
    bottom_center = len(flat)
    top_center = len(flat) + 1
    flat = np.concatenate([flat, verts[0].mean(0, keepdims=True),
                           verts[-1].mean(0, keepdims=True)])
    top_base = (len(rings) - 1) * m
    for i in range(m):
        j = (i + 1) % m
        faces.append([bottom_center, j, i])
        faces.append([top_center, top_base + i, top_base + j])
    mesh = Mesh(flat, np.array(faces, dtype=np.int64))
    if signed_volume(mesh) < 0:
        mesh.faces = mesh.faces[:, [0, 2, 1]].copy()
    return mesh


def _rect_ring(hx: float, hz: float, y: float) -> np.ndarray:
    return np.array(
        [[-hx, y, -hz], [hx, y, -hz], [hx, y, hz], [-hx, y, hz]]
    )


def _circle_ring(radius: float, y: float, segments: int = 16) -> np.ndarray:
    theta = 2 * np.pi * np.arange(segments) / segments
    return np.stack(
        [radius * np.cos(theta), np.full(segments, y), radius * np.sin(theta)],
        axis=1,
    )


def _normalize(mesh: Mesh, rng: np.random.Generator) -> Mesh:
    """Center the bounding box at the origin and scale to a sampled radius."""
    lo, hi = mesh.vertices.min(0), mesh.vertices.max(0)
    centered = mesh.vertices - 0.5 * (lo + hi)
    target = rng.uniform(0.85, 1.15)
    radius = np.linalg.norm(centered, axis=1).max()
    return Mesh(centered * (target / radius), mesh.faces.copy())


def _shear(verts: np.ndarray, lean_x: float, bend_z: float, half_h: float):
    """Two-phase asymmetry: x grows linearly with height, z quadratically."""
    t = verts[:, 1] / half_h  # in [-1, 1]
    out = verts.copy()
    out[:, 0] += lean_x * t
    out[:, 2] += bend_z * t * t
    return out


def _make_box(rng: np.random.Generator) -> Mesh:
    hx = rng.uniform(0.45, 0.9)
    hy = rng.uniform(0.5, 1.0)
    hz = rng.uniform(0.45, 0.9)
    lean = rng.uniform(0.25, 0.45) * hy
    bend = rng.uniform(0.2, 0.35) * hy
    rings = [_rect_ring(hx, hz, y) for y in (-hy, 0.0, hy)]
    mesh = _ring_stack(rings)
    mesh.vertices = _shear(mesh.vertices, lean, bend, hy)
    return mesh


def _make_cylinder(rng: np.random.Generator, segments: int = 16) -> Mesh:
    radius = rng.uniform(0.35, 0.65)
    hy = rng.uniform(0.6, 1.0)
    lean = rng.uniform(0.25, 0.45) * hy
    bend = rng.uniform(0.2, 0.35) * hy
    ys = np.linspace(-hy, hy, 5)
    mesh = _ring_stack([_circle_ring(radius, y, segments) for y in ys])
    mesh.vertices = _shear(mesh.vertices, lean, bend, hy)
    return mesh


def _make_ellipsoid(rng: np.random.Generator) -> Mesh:
    a = rng.uniform(0.5, 1.0)
    b = rng.uniform(0.5, 1.0)
    c = rng.uniform(0.5, 1.0)
    lean = rng.uniform(0.3, 0.5) * a
    bend = rng.uniform(0.25, 0.4) * c
    base = make_icosphere(2)
    verts = base.vertices * np.array([a, b, c])
    t = base.vertices[:, 1]  # in [-1, 1] on the unit sphere
    verts[:, 0] += lean * t
    verts[:, 2] += bend * t * t
    return Mesh(verts, base.faces.copy())


def _make_table(rng: np.random.Generator) -> Mesh:
    hx = rng.uniform(0.7, 1.0)
    hz = rng.uniform(0.55, 0.9)
    height = rng.uniform(0.9, 1.3)
    thick = rng.uniform(0.08, 0.14)
    leg_w = rng.uniform(0.07, 0.12)
    overhang = rng.uniform(0.3, 0.5) * hx  # top extends toward +x only
    leg_shift = rng.uniform(0.2, 0.35) * hz  # +z legs pulled inward
    gap = 2e-3
    top = _ring_stack(
        [_rect_ring(1.0, 1.0, y) for y in (height - thick, height)]
    )
    tv = top.vertices.copy()
    tv[:, 0] = tv[:, 0] * hx + np.where(tv[:, 0] > 0, overhang, 0.0)
    tv[:, 2] *= hz
    top.vertices = tv
    parts = [top]
    for sx in (-1, 1):
        for sz in (-1, 1):
            cx = sx * (hx - leg_w)
            cz = sz * (hz - leg_w) - (leg_shift if sz > 0 else 0.0)
            leg = _ring_stack(
                [_rect_ring(leg_w, leg_w, y) for y in (0.0, height - thick - gap)]
            )
            lv = leg.vertices.copy()
            lv[:, 0] += cx
            lv[:, 2] += cz
            leg.vertices = lv
            parts.append(leg)
    return merge_meshes(parts)


def _make_lamp(rng: np.random.Generator) -> Mesh:
    base_w = rng.uniform(0.35, 0.5)
    base_d = rng.uniform(0.3, 0.45)
    base_h = rng.uniform(0.07, 0.13)
    base_ext = rng.uniform(0.4, 0.6) * base_w  # base extends toward +x only
    pole_r = rng.uniform(0.05, 0.09)
    pole_h = rng.uniform(0.8, 1.2)
    shade_r = rng.uniform(0.4, 0.6)
    shade_h = rng.uniform(0.3, 0.45)
    shade_shift = rng.uniform(0.45, 0.7) * shade_r  # shade offset toward +z
    gap = 2e-3
    base = _ring_stack([_rect_ring(1.0, 1.0, y) for y in (0.0, base_h)])
    bv = base.vertices.copy()
    bv[:, 0] = bv[:, 0] * base_w + np.where(bv[:, 0] > 0, base_ext, 0.0)
    bv[:, 2] *= base_d
    base.vertices = bv
    pole = _ring_stack(
        [_circle_ring(pole_r, y, 8)
         for y in (base_h + gap, base_h + gap + pole_h)]
    )
    shade_y0 = base_h + 2 * gap + pole_h
    shade = _ring_stack(
        [
            _circle_ring(shade_r, shade_y0, 16),
            _circle_ring(0.35 * shade_r, shade_y0 + shade_h, 16),
        ]
    )
    sv = shade.vertices.copy()
    sv[:, 2] += shade_shift
    shade.vertices = sv
    return merge_meshes([base, pole, shade])


_MAKERS = {
    "box": _make_box,
    "ellipsoid": _make_ellipsoid,
    "cylinder": _make_cylinder,
    "table": _make_table,
    "lamp": _make_lamp,
}


def make_instance(category: str, rng: np.random.Generator) -> Mesh:
    """One seeded procedural mesh, bbox-centered, max radius in [0.85,1.15]."""
    if category not in _MAKERS:
        raise ValueError(
            f"unknown category {category!r}; choose from {CATEGORIES}"
        )
    return _normalize(_MAKERS[category](rng), rng)


def exemplar_mesh(word: str) -> Mesh:
    """Deterministic procedural stand-in mesh for a known category word."""
    kind = EXEMPLAR_CATEGORY.get(word)
    if kind is None:
        raise KeyError(f"no exemplar for {word!r}")
    if kind == "sphere":
        return make_icosphere(3)
    seed = int.from_bytes(
        hashlib.sha256(f"exemplar:{word}".encode()).digest()[:4], "little"
    )
    return make_instance(kind, np.random.default_rng(seed))


def render_sketch_mask(
    mesh: Mesh, pose: CameraPose, resolution: int
) -> np.ndarray:
    """Binary occupancy (1 = inside) of the mesh silhouette at a pose."""
    cfg = RenderConfig(resolution, resolution)
    sil = render_silhouette(mesh, pose, cfg)
    return (sil.values >= 0.5).astype(np.float64)


def boundary_mask(mask: np.ndarray) -> np.ndarray:
    """Pixels of the mask 4-adjacent to background (closed outline)."""
    mask = mask.astype(bool)
    eroded = ndimage.binary_erosion(
        mask, structure=ndimage.generate_binary_structure(2, 1),
        border_value=0,
    )
    return (mask & ~eroded).astype(np.float64)


@dataclass(frozen=True)
class DatasetConfig:
    categories: tuple[str, ...] = CATEGORIES
    count_per_category: int = 10
    resolution: int = 128
    seed: int = 0

    def __post_init__(self):
        unknown = set(self.categories) - set(CATEGORIES)
        if unknown:
            raise ValueError(f"unknown categories: {sorted(unknown)}")
        if self.count_per_category < 1:
            raise ValueError("count_per_category must be >= 1")


@dataclass
class DatasetInstance:
    path: Path
    category: str
    pose: CameraPose

    def load_mesh(self) -> Mesh:
        from .mesh import import_obj

        return import_obj((self.path / "mesh.obj").read_bytes())

    def load_sketch_png(self) -> bytes:
        return (self.path / "sketch.png").read_bytes()

    def load_sketch_mask(self) -> np.ndarray:
        """Occupancy (1 = inside) from the stored stroke-convention PNG."""
        return (png_to_gray(self.load_sketch_png()) < 0.5).astype(np.float64)

    def load_voxels(self):
        from .voxel import load_voxels, mesh_bounds

        bounds = mesh_bounds(self.load_mesh())
        return load_voxels((self.path / "voxels.bin").read_bytes(), bounds)


def generate_dataset(out_dir, config: DatasetConfig) -> list[DatasetInstance]:
    """Write the dataset directory; byte-identical for identical configs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    instances = []
    for ci, category in enumerate(config.categories):
        for idx in range(config.count_per_category):
            rng = np.random.default_rng([config.seed, ci, idx])
            mesh = make_instance(category, rng)
            pose = CameraPose(
                float(rng.uniform(0.0, 360.0)),
                float(rng.uniform(*ELEVATION_RANGE)),
                CANONICAL_DISTANCE,
            )
            inst_dir = out / f"{category}_{idx:04d}"
            inst_dir.mkdir(exist_ok=True)
            from .mesh import export_obj

            (inst_dir / "mesh.obj").write_bytes(export_obj(mesh))
            mask = render_sketch_mask(mesh, pose, config.resolution)
            (inst_dir / "sketch.png").write_bytes(image_to_png(1.0 - mask))
            edges = boundary_mask(mask)
            (inst_dir / "edges.png").write_bytes(image_to_png(1.0 - edges))
            (inst_dir / "voxels.bin").write_bytes(
                save_voxels(voxelize(mesh, 32))
            )
            meta = {
                "category": category,
                "azimuth_deg": pose.azimuth_deg,
                "elevation_deg": pose.elevation_deg,
                "distance": pose.distance,
            }
            (inst_dir / "meta.json").write_text(
                json.dumps(meta, sort_keys=True, indent=1) + "\n"
            )
            instances.append(DatasetInstance(inst_dir, category, pose))
    return instances


def load_dataset(root) -> list[DatasetInstance]:
    root = Path(root)
    instances = []
    for inst_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        meta_path = inst_dir / "meta.json"
        if not meta_path.exists():
            continue
        meta = json.loads(meta_path.read_text())
        pose = CameraPose(
            meta["azimuth_deg"], meta["elevation_deg"], meta["distance"]
        )
        instances.append(DatasetInstance(inst_dir, meta["category"], pose))
    if not instances:
        raise ValueError(f"no dataset instances found under {root}")
    return instances
