import time

import numpy as np
import pytest
import torch

from sketchforge.errors import CheckpointError
from sketchforge.mesh import check_closed_manifold, make_icosphere
from sketchforge.network import (
    LatentCodes,
    ModelConfig,
    SketchToMeshModel,
    decode,
    encode,
    infer,
    load_checkpoint,
    predict_viewpoint,
    save_checkpoint,
)
from sketchforge.sketch import sketch_from_mask


@pytest.fixture(scope="module")
def model():
    return SketchToMeshModel(ModelConfig(resolution=64, seed=3))


@pytest.fixture(scope="module")
def sketch64():
    mask = np.zeros((64, 64))
    mask[16:48, 20:44] = 1.0
    return sketch_from_mask(mask)


class TestEncode:
    def test_codes_unit_norm_and_deterministic(self, model, sketch64):
        a = encode(sketch64, model)
        b = encode(sketch64, model)
        assert np.linalg.norm(a.z_s) == pytest.approx(1.0, abs=1e-5)
        assert np.linalg.norm(a.z_v) == pytest.approx(1.0, abs=1e-5)
        assert np.array_equal(a.z_s, b.z_s)

    def test_different_sketches_differ(self, model, sketch64):
        other = np.zeros((64, 64))
        other[5:60, 5:20] = 1.0
        codes_a = encode(sketch64, model)
        codes_b = encode(sketch_from_mask(other), model)
        assert float(codes_a.z_s @ codes_b.z_s) < 1.0 - 1e-6

    def test_resolution_mismatch_rejected(self, model):
        bad = np.zeros((32, 32))
        bad[10:20, 10:20] = 1.0
        with pytest.raises(ValueError, match="expects"):
            encode(sketch_from_mask(bad), model)

    def test_latent_codes_validate(self):
        with pytest.raises(ValueError, match="unit-norm"):
            LatentCodes(np.ones(8), np.ones(8) / np.sqrt(8))


class TestDecode:
    def test_zero_weights_give_template(self):
        model = SketchToMeshModel(ModelConfig(resolution=64, seed=0))
        for p in model.decoder.parameters():
            torch.nn.init.zeros_(p)
        z = np.zeros(128)
        z[0] = 1.0
        mesh = decode(z, model)
        assert np.abs(mesh.vertices - make_icosphere(3).vertices).max() < 1e-6

    def test_output_vertex_count_642(self, model):
        z = np.zeros(128)
        z[3] = 1.0
        mesh = decode(z, model)
        assert mesh.n_vertices == 642  # 10 * 4^3 + 2

    def test_offsets_bounded(self, model):
        rng = np.random.default_rng(0)
        z = rng.standard_normal(128)
        z /= np.linalg.norm(z)
        mesh = decode(z, model)
        offsets = mesh.vertices - make_icosphere(3).vertices
        assert np.abs(offsets).max() <= 0.75 + 1e-9

    def test_manifold_for_random_codes(self, model):
        rng = np.random.default_rng(7)
        for _ in range(3):
            z = rng.standard_normal(128)
            z /= np.linalg.norm(z)
            mesh = decode(z, model)
            check_closed_manifold(mesh)
            assert np.array_equal(mesh.faces, make_icosphere(3).faces)

    def test_non_unit_code_rejected(self, model):
        with pytest.raises(ValueError, match="unit"):
            decode(np.ones(128), model)


class TestViewpoint:
    def test_zero_weights_canonical(self):
        model = SketchToMeshModel(ModelConfig(resolution=64, seed=0))
        for p in model.viewpoint.parameters():
            torch.nn.init.zeros_(p)
        z = np.zeros(128)
        z[0] = 1.0
        pose = predict_viewpoint(z, model)
        assert pose.azimuth_deg == pytest.approx(0.0, abs=1e-6)
        assert pose.elevation_deg == pytest.approx(0.0, abs=1e-6)

    def test_always_range_valid(self, model):
        rng = np.random.default_rng(11)
        for _ in range(10):
            z = rng.standard_normal(128)
            z /= np.linalg.norm(z)
            pose = predict_viewpoint(z, model)
            assert 0.0 <= pose.azimuth_deg < 360.0
            assert -90.0 <= pose.elevation_deg <= 90.0


class TestInfer:
    def test_deterministic_and_valid(self, model, sketch64):
        mesh_a, pose_a = infer(sketch64, model)
        mesh_b, pose_b = infer(sketch64, model)
        assert np.array_equal(mesh_a.vertices, mesh_b.vertices)
        assert pose_a == pose_b
        check_closed_manifold(mesh_a)

    def test_latency_single_threaded(self, model, sketch64):
        # desk analog of the reported CPU runtime budget
        torch.set_num_threads(1)
        infer(sketch64, model)  # warm
        t0 = time.perf_counter()
        n = 10
        for _ in range(n):
            infer(sketch64, model)
        per_call = (time.perf_counter() - t0) / n
        assert per_call < 0.1, f"infer took {per_call * 1e3:.1f} ms"


class TestCheckpoint:
    def test_roundtrip_weights(self, model):
        blob = save_checkpoint(model, {"note": "test"}, "fingerprint123")
        again, manifest, extra = load_checkpoint(blob)
        assert manifest["dataset_fingerprint"] == "fingerprint123"
        assert extra == {}
        for (ka, va), (kb, vb) in zip(
            model.state_dict().items(), again.state_dict().items()
        ):
            assert ka == kb
            assert torch.allclose(va, vb, atol=1e-7)

    def test_deterministic_bytes(self, model):
        a = save_checkpoint(model, {"x": 1}, "fp")
        b = save_checkpoint(model, {"x": 1}, "fp")
        assert a == b

    def test_bad_magic(self):
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(b"JUNKJUNKJUNK")

    def test_version_mismatch(self, model):
        blob = bytearray(save_checkpoint(model))
        blob[4] = 99
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(bytes(blob))

    def test_truncated(self, model):
        blob = save_checkpoint(model)
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(blob[: len(blob) // 2])

    def test_optimizer_state_roundtrip(self, model, sketch64):
        optim = torch.optim.Adam(model.parameters(), lr=1e-3)
        batch = torch.as_tensor(
            sketch64.values, dtype=torch.float32
        ).reshape(1, 1, 64, 64)
        verts, az, el = model(batch)
        (verts.sum() + az.sum() + el.sum()).backward()
        optim.step()
        blob = save_checkpoint(model, optimizer=optim)
        _, _, extra = load_checkpoint(blob)
        assert any(k.endswith(".exp_avg") for k in extra)
