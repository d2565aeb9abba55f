import numpy as np
import pytest

from sketchforge.errors import NotWatertightError
from sketchforge.mesh import Mesh, make_box, make_icosphere
from sketchforge.procgen import make_instance
from sketchforge.voxel import (
    VoxelBounds,
    load_voxels,
    mesh_bounds,
    save_voxels,
    voxel_iou,
    voxelize,
)


@pytest.fixture(scope="module")
def unit_cube():
    return make_box((0.5, 0.5, 0.5))


class TestVoxelize:
    def test_cube_aligned_bounds_all_inside(self, unit_cube):
        grid = voxelize(unit_cube, 8, VoxelBounds((0, 0, 0), 1.0))
        assert grid.occupancy.all()

    def test_cube_against_brute_force_oracle(self, unit_cube):
        # DERIVED: per-cell point-in-box test
        grid = voxelize(unit_cube, 16)
        centers = grid.bounds.cell_centers(16)
        oracle = (
            (np.abs(centers)[:, None, None] < 0.5)
            & (np.abs(centers)[None, :, None] < 0.5)
            & (np.abs(centers)[None, None, :] < 0.5)
        )
        assert not (grid.occupancy ^ oracle).any()

    def test_sphere_against_ball_oracle(self, icosphere3):
        grid = voxelize(icosphere3, 32)
        c = grid.bounds.cell_centers(32)
        x, y, z = np.meshgrid(c, c, c, indexing="ij")
        ball = x * x + y * y + z * z < 1.0
        mismatch = (grid.occupancy ^ ball).sum() / ball.sum()
        assert mismatch < 0.02  # facet chords vs the smooth ball

    def test_empty_columns_left_of_mesh(self, unit_cube):
        bounds = VoxelBounds((2.0, 0.0, 0.0), 2.0)  # mesh left of all cells
        grid = voxelize(unit_cube, 8, bounds)
        assert not grid.occupancy[:, :, :4].any()

    def test_self_iou_is_one(self, unit_cube):
        g = voxelize(unit_cube, 16)
        assert voxel_iou(g, g) == 1.0

    def test_open_mesh_rejected(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        open_mesh = Mesh(verts, np.array([[0, 1, 2]]))
        with pytest.raises(NotWatertightError):
            voxelize(open_mesh, 8)

    def test_resolution_bounds(self, unit_cube):
        with pytest.raises(ValueError):
            voxelize(unit_cube, 4)
        with pytest.raises(ValueError):
            voxelize(unit_cube, 256)

    @pytest.mark.parametrize("category", ["table", "lamp"])
    def test_multi_component_instances(self, category):
        mesh = make_instance(category, np.random.default_rng([5, 1]))
        grid = voxelize(mesh, 32)
        assert 0 < grid.occupancy.sum() < grid.occupancy.size


class TestVoxelIoU:
    def _grid(self, cells, r=8):
        occ = np.zeros((r, r, r), dtype=bool)
        for c in cells:
            occ[c] = True
        return type(voxelize(make_box(), 8))(r, occ, VoxelBounds((0, 0, 0), 1.0))

    def test_identical(self):
        a = self._grid([(0, 0, 0), (1, 1, 1)])
        assert voxel_iou(a, a) == 1.0

    def test_disjoint(self):
        a = self._grid([(0, 0, 0)])
        b = self._grid([(1, 1, 1)])
        assert voxel_iou(a, b) == 0.0

    def test_half_overlap_hand_count(self):
        # DERIVED: intersection 2, union 4 -> IoU 0.5
        a = self._grid([(0, 0, 0), (1, 0, 0)])
        b = self._grid([(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0)])
        assert voxel_iou(a, b) == 0.5

    def test_symmetry(self):
        a = self._grid([(0, 0, 0), (1, 0, 0), (5, 5, 5)])
        b = self._grid([(1, 0, 0), (2, 2, 2)])
        assert voxel_iou(a, b) == voxel_iou(b, a)

    def test_both_empty_is_one(self):
        a = self._grid([])
        assert voxel_iou(a, a) == 1.0

    def test_mismatched_resolution(self):
        a = self._grid([(0, 0, 0)], r=8)
        b = voxelize(make_box((0.5, 0.5, 0.5)), 16)
        with pytest.raises(ValueError):
            voxel_iou(a, b)

    def test_mismatched_bounds(self, unit_cube):
        a = voxelize(unit_cube, 8, VoxelBounds((0, 0, 0), 1.0))
        b = voxelize(unit_cube, 8, VoxelBounds((0, 0, 0), 2.0))
        with pytest.raises(ValueError, match="bounds"):
            voxel_iou(a, b)


class TestVoxelBlob:
    def test_roundtrip(self, icosphere3):
        grid = voxelize(icosphere3, 32)
        blob = save_voxels(grid)
        assert blob[:4] == b"SFVX"
        assert len(blob) == 16 + 32 * 32 * 32 // 8
        again = load_voxels(blob, grid.bounds)
        assert np.array_equal(again.occupancy, grid.occupancy)

    def test_bad_magic(self):
        with pytest.raises(ValueError, match="magic"):
            load_voxels(b"NOPE" + b"\x00" * 32)


def test_mesh_bounds_scale(icosphere3):
    b = mesh_bounds(icosphere3)
    assert b.edge == pytest.approx(2.0 * 1.05, rel=1e-9)
    assert np.allclose(b.center, 0.0, atol=1e-9)
