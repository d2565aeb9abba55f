import numpy as np
import pytest

from sketchforge.errors import NonManifoldError, ObjParseError
from sketchforge.mesh import (
    Mesh,
    check_closed_manifold,
    displace_along_normals,
    export_obj,
    icosphere_levels,
    import_obj,
    make_box,
    make_icosphere,
    signed_volume,
    vertex_normals,
)


class TestIcosphere:
    def test_subdiv0_counts(self):
        m = make_icosphere(0)
        assert m.n_vertices == 12
        assert m.n_faces == 20

    def test_subdiv1_counts(self):
        m = make_icosphere(1)
        assert m.n_vertices == 42
        assert m.n_faces == 80

    @pytest.mark.parametrize("s", range(6))
    def test_counts_formula_and_genus(self, s):
        m = make_icosphere(s)
        assert m.n_vertices == 10 * 4**s + 2
        topo = m.topology()
        assert topo.euler_characteristic() == 2
        assert topo.is_closed_manifold()

    @pytest.mark.parametrize("s", range(4))
    def test_unit_radius_outward(self, s):
        m = make_icosphere(s)
        radii = np.linalg.norm(m.vertices, axis=1)
        assert np.allclose(radii, 1.0, atol=1e-12)
        assert signed_volume(m) > 0

    def test_out_of_range_subdivision(self):
        with pytest.raises(ValueError):
            make_icosphere(6)
        with pytest.raises(ValueError):
            make_icosphere(-1)

    def test_levels_parents_are_edge_midpoints(self):
        levels = icosphere_levels(2)
        coarse, _, _ = levels[1]
        fine, _, parents = levels[2]
        mid = 0.5 * (coarse[parents[:, 0]] + coarse[parents[:, 1]])
        mid /= np.linalg.norm(mid, axis=1, keepdims=True)
        assert np.allclose(fine[len(coarse):], mid, atol=1e-12)


class TestMeshValidation:
    def test_face_index_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            Mesh(np.zeros((3, 3)), np.array([[0, 1, 3]]))

    def test_degenerate_face(self):
        with pytest.raises(ValueError, match="degenerate"):
            Mesh(np.eye(3), np.array([[0, 1, 1]]))

    def test_color_length_mismatch(self):
        with pytest.raises(ValueError, match="colors"):
            Mesh(np.eye(3), np.array([[0, 1, 2]]), colors=np.zeros((2, 3)))

    def test_color_range(self):
        with pytest.raises(ValueError, match="colors"):
            Mesh(np.eye(3), np.array([[0, 1, 2]]),
                 colors=np.full((3, 3), 1.5))

    def test_non_manifold_detection(self):
        # three faces sharing one edge
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]],
            dtype=float,
        )
        faces = np.array([[0, 1, 2], [0, 1, 3], [0, 1, 4]])
        with pytest.raises(NonManifoldError):
            check_closed_manifold(Mesh(verts, faces))


class TestVertexNormals:
    def test_icosphere_normals_radial(self, icosphere1):
        n = vertex_normals(icosphere1)
        expected = icosphere1.vertices / np.linalg.norm(
            icosphere1.vertices, axis=1, keepdims=True
        )
        assert np.abs(n - expected).max() < 1e-6

    def test_cube_corner_normals(self):
        # DERIVED: with the tetrahedral diagonal pattern every corner
        # accumulates equal area-weighted contributions per axis, so the
        # hand-computed average is exactly normalize(+-1,+-1,+-1)
        cube = make_box((1.0, 1.0, 1.0))
        n = vertex_normals(cube)
        expected = cube.vertices / np.sqrt(3.0)
        assert np.abs(n - expected).max() < 1e-12

    def test_flipped_winding_negates(self, icosphere1):
        flipped = Mesh(
            icosphere1.vertices.copy(), icosphere1.faces[:, [0, 2, 1]].copy()
        )
        assert np.allclose(
            vertex_normals(flipped), -vertex_normals(icosphere1), atol=1e-12
        )

    def test_zero_normal_error_names_vertex(self):
        # two opposite-winding copies of the same triangle cancel at all
        # three vertices
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        faces = np.array([[0, 1, 2], [0, 2, 1]])
        with pytest.raises(ValueError, match="vertex 0"):
            vertex_normals(Mesh(verts, faces))


class TestDisplace:
    def test_zero_displacement_identity(self, icosphere1):
        out = displace_along_normals(icosphere1, np.zeros(icosphere1.n_vertices))
        assert np.array_equal(out.vertices, icosphere1.vertices)
        assert np.array_equal(out.faces, icosphere1.faces)

    def test_radial_expansion(self, icosphere1):
        out = displace_along_normals(icosphere1, np.full(icosphere1.n_vertices, 0.5))
        radii = np.linalg.norm(out.vertices, axis=1)
        assert np.abs(radii - 1.5).max() < 1e-6

    def test_radial_collapse(self, icosphere1):
        out = displace_along_normals(icosphere1, np.full(icosphere1.n_vertices, -1.0))
        assert np.abs(out.vertices).max() < 1e-6

    def test_length_mismatch(self, icosphere1):
        with pytest.raises(ValueError, match="displacements"):
            displace_along_normals(icosphere1, np.zeros(5))


class TestObjRoundTrip:
    def test_icosphere_roundtrip(self, icosphere1):
        again = import_obj(export_obj(icosphere1))
        assert again.n_vertices == icosphere1.n_vertices
        assert again.n_faces == icosphere1.n_faces
        assert np.abs(again.vertices - icosphere1.vertices).max() < 1e-6
        assert np.array_equal(again.faces, icosphere1.faces)

    def test_colored_roundtrip(self, icosphere1):
        rng = np.random.default_rng(0)
        mesh = Mesh(
            icosphere1.vertices.copy(),
            icosphere1.faces.copy(),
            rng.uniform(0, 1, (icosphere1.n_vertices, 3)),
        )
        again = import_obj(export_obj(mesh))
        assert np.abs(again.colors - mesh.colors).max() < 1e-6

    def test_one_based_indexing_enforced(self):
        data = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"
        with pytest.raises(ObjParseError, match="1-based") as err:
            import_obj(data)
        assert err.value.line == 4

    def test_bad_vertex_line(self):
        with pytest.raises(ObjParseError) as err:
            import_obj(b"v 1 2\n")
        assert err.value.line == 1

    def test_slash_face_syntax(self):
        data = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n"
        mesh = import_obj(data)
        assert mesh.n_faces == 1

    def test_export_is_deterministic(self, icosphere1):
        assert export_obj(icosphere1) == export_obj(icosphere1)
