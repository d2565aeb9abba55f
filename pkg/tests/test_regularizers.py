import numpy as np
import pytest
import torch

from sketchforge.errors import NonManifoldError
from sketchforge.mesh import Mesh, make_icosphere
from sketchforge.regularizers import (
    flatten_energy_batch,
    flatten_energy_t,
    flatten_loss,
    flatten_loss_grad,
    laplacian_energy_batch,
    laplacian_energy_t,
    laplacian_loss,
    laplacian_loss_grad,
    regularizer_tensors,
)


def _fd_gradient(mesh, loss_fn, h=1e-4):
    grad = np.zeros_like(mesh.vertices)
    for idx in np.ndindex(*mesh.vertices.shape):
        plus = mesh.copy()
        plus.vertices[idx] += h
        minus = mesh.copy()
        minus.vertices[idx] -= h
        grad[idx] = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
    return grad


def _rel_err(analytic, fd):
    mask = np.abs(analytic) > 1e-6
    denom = np.maximum(np.abs(analytic[mask]), np.abs(fd[mask]))
    return np.abs(analytic[mask] - fd[mask]) / denom


@pytest.fixture(scope="module")
def bumpy_sphere():
    mesh = make_icosphere(1)
    rng = np.random.default_rng(7)
    mesh.vertices = mesh.vertices * rng.uniform(0.8, 1.2, (mesh.n_vertices, 1))
    return mesh


class TestLaplacian:
    def test_icosphere_positive_and_symmetric(self):
        mesh = make_icosphere(2)
        value = laplacian_loss(mesh)
        assert value > 0
        # vertices in the same symmetry orbit see congruent neighborhoods:
        # the 12 valence-5 originals form one orbit and the valence-6
        # midpoints split into three (level-1 midpoints, and level-2
        # midpoints of 5-6 vs 6-6 edges), so per-vertex energies take
        # exactly four values
        reg = regularizer_tensors(mesh)
        verts = torch.as_tensor(mesh.vertices)
        nsum = torch.zeros_like(verts).index_add(
            0, reg.neighbor_src, verts[reg.neighbor_dst]
        )
        per_vertex = (
            (verts - nsum / reg.degrees.to(verts.dtype)[:, None]) ** 2
        ).sum(1)
        five = per_vertex[reg.degrees == 5]
        assert float(five.max() - five.min()) < 1e-9
        distinct = np.unique(per_vertex.numpy().round(12))
        assert len(distinct) == 4

    def test_coincident_vertices_zero(self):
        mesh = make_icosphere(0)
        mesh.vertices = np.zeros_like(mesh.vertices) + 0.3
        assert laplacian_loss(mesh) == 0.0

    def test_gradient_matches_fd(self, bumpy_sphere):
        # DERIVED: central finite differences, h = 1e-4
        value, grad = laplacian_loss_grad(bumpy_sphere)
        fd = _fd_gradient(bumpy_sphere, laplacian_loss)
        assert value > 0
        assert _rel_err(grad, fd).max() < 1e-4

    def test_translation_invariance(self, bumpy_sphere):
        moved = bumpy_sphere.copy()
        moved.vertices = moved.vertices + np.array([11.0, -3.0, 0.5])
        assert abs(laplacian_loss(moved) - laplacian_loss(bumpy_sphere)) < 1e-9

    def test_isolated_vertex_rejected(self):
        verts = np.concatenate([make_icosphere(0).vertices, [[5.0, 5.0, 5.0]]])
        mesh = Mesh(verts, make_icosphere(0).faces)
        with pytest.raises(ValueError, match="isolated"):
            laplacian_loss(mesh)


class TestFlatten:
    def test_planar_patch_zero(self):
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float
        )
        faces = np.array([[0, 1, 2], [1, 3, 2]])
        assert flatten_loss(Mesh(verts, faces)) == pytest.approx(0.0, abs=1e-18)

    def test_folded_edge_contribution_four(self):
        # TRIVIAL: theta = 0 between a face and its fold-back, (1+cos)^2 = 4
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0.4, 0.4, 0]], dtype=float
        )
        faces = np.array([[0, 1, 2], [1, 0, 3]])  # second face folded back
        assert flatten_loss(Mesh(verts, faces)) == pytest.approx(4.0, abs=1e-12)

    def test_gradient_matches_fd(self, bumpy_sphere):
        # DERIVED: central finite differences, h = 1e-4
        value, grad = flatten_loss_grad(bumpy_sphere)
        fd = _fd_gradient(bumpy_sphere, flatten_loss)
        assert value > 0
        assert _rel_err(grad, fd).max() < 1e-4

    def test_rototranslation_invariance(self, bumpy_sphere):
        from scipy.spatial.transform import Rotation

        rot = Rotation.from_euler("xyz", [20, -35, 60], degrees=True)
        moved = bumpy_sphere.copy()
        moved.vertices = rot.apply(moved.vertices) + np.array([1.0, 2.0, 3.0])
        assert abs(
            flatten_loss(moved) - flatten_loss(bumpy_sphere)
        ) < 1e-9

    def test_non_manifold_edge_rejected(self):
        verts = np.array(
            [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, -1, 0]],
            dtype=float,
        )
        faces = np.array([[0, 1, 2], [0, 1, 3], [1, 0, 4]])
        with pytest.raises(NonManifoldError):
            flatten_loss(Mesh(verts, faces))


class TestBatchedVariants:
    def test_batched_equals_single(self, bumpy_sphere):
        reg = regularizer_tensors(bumpy_sphere)
        rng = np.random.default_rng(3)
        batch = torch.as_tensor(
            np.stack([
                bumpy_sphere.vertices,
                bumpy_sphere.vertices * rng.uniform(0.9, 1.1, (42, 1)),
            ])
        )
        lap_b = laplacian_energy_batch(batch, reg)
        flat_b = flatten_energy_batch(batch, reg)
        for b in range(2):
            assert float(lap_b[b]) == pytest.approx(
                float(laplacian_energy_t(batch[b], reg)), rel=1e-12
            )
            assert float(flat_b[b]) == pytest.approx(
                float(flatten_energy_t(batch[b], reg)), rel=1e-12
            )
