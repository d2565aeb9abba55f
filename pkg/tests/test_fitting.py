import numpy as np
import pytest
import torch

from sketchforge.camera import canonical_pose
from sketchforge.errors import DivergenceError
from sketchforge.fitting import FitConfig, fit
from sketchforge.losses import LossWeights
from sketchforge.mesh import make_icosphere
from sketchforge.procgen import render_sketch_mask
from sketchforge.sketch import sketch_from_mask


@pytest.fixture(scope="module")
def template_sketch():
    mask = render_sketch_mask(make_icosphere(3), canonical_pose(), 128)
    return sketch_from_mask(mask)


class TestFitConfig:
    def test_resolution_power_of_two(self):
        with pytest.raises(ValueError, match="power of 2"):
            FitConfig(resolution=48)

    def test_iterations_positive(self):
        with pytest.raises(ValueError):
            FitConfig(iterations=0)

    def test_sigma_schedule_endpoints(self):
        cfg = FitConfig(iterations=100)
        assert cfg.sigma_at(0) == pytest.approx(cfg.sigma_start)
        assert cfg.sigma_at(99) == pytest.approx(cfg.sigma)

    def test_step_schedule_decays(self):
        cfg = FitConfig(iterations=100, step_size=0.01)
        assert cfg.step_at(0) == pytest.approx(0.01)
        assert cfg.step_at(100) == pytest.approx(0.002)


class TestFit:
    def test_template_sketch_is_near_fixed_point(self, template_sketch):
        # the sketch IS the template's silhouette: offsets stay small and
        # the silhouette loss does not regress
        cfg = FitConfig(
            iterations=60,
            weights=LossWeights(1.0, 1e-4, 0.0, 0.0),
            seed=0,
        )
        result = fit(template_sketch, None, cfg)
        offsets = result.mesh.vertices - make_icosphere(3).vertices
        assert np.abs(offsets).max() < 0.05
        assert result.trace.ms[-1] <= result.trace.ms[0]

    def test_trace_lengths_and_finiteness(self, template_sketch):
        cfg = FitConfig(iterations=8, prompt="A grey sphere", seed=1)
        result = fit(template_sketch, None, cfg)
        assert len(result.trace.total) == 8
        assert len(result.trace.best_total) == 8
        assert np.isfinite(result.trace.total).all()
        assert np.isfinite(result.trace.clip).all()

    def test_best_so_far_non_increasing(self, template_sketch):
        cfg = FitConfig(iterations=30, seed=2,
                        weights=LossWeights(1.0, 1e-4, 0.0, 0.0))
        result = fit(template_sketch, None, cfg)
        best = result.trace.best_total
        assert all(a >= b - 1e-12 for a, b in zip(best, best[1:]))

    def test_topology_preserved(self, template_sketch):
        cfg = FitConfig(iterations=5, seed=0)
        result = fit(template_sketch, None, cfg)
        assert np.array_equal(result.mesh.faces, make_icosphere(3).faces)

    def test_deterministic(self, template_sketch):
        cfg = FitConfig(iterations=6, prompt="A grey sphere", seed=7)
        a = fit(template_sketch, None, cfg)
        b = fit(template_sketch, None, cfg)
        assert np.array_equal(a.mesh.vertices, b.mesh.vertices)

    def test_provider_failure_skips_clip_with_warning(self, template_sketch):
        class Flaky:
            supports_image_gradient = True

            def embed_image_t(self, img):
                raise OSError("socket closed")

            def embed_text(self, prompt):
                from sketchforge.embedding import toy_provider

                return toy_provider().embed_text(prompt)

        cfg = FitConfig(iterations=3, prompt="A grey box", seed=0)
        result = fit(template_sketch, None, cfg, provider=Flaky())
        assert any("clip term skipped" in w for w in result.trace.warnings)
        assert len(result.trace.total) == 3

    def test_gradient_free_provider_falls_back_to_toy(self, template_sketch):
        class NoGrad:
            supports_image_gradient = False

        cfg = FitConfig(iterations=2, prompt="A grey box", seed=0)
        result = fit(template_sketch, None, cfg, provider=NoGrad())
        assert any("toy provider" in w for w in result.trace.warnings)

    def test_divergence_carries_iteration(self, template_sketch):
        class PoisonProvider:
            supports_image_gradient = True

            def embed_image_t(self, img):
                return torch.full((64,), float("nan"), dtype=torch.float64)

            def embed_text(self, prompt):
                from sketchforge.embedding import toy_provider

                return toy_provider().embed_text(prompt)

        cfg = FitConfig(iterations=4, prompt="A grey box", seed=0)
        with pytest.raises(DivergenceError) as err:
            fit(template_sketch, None, cfg, provider=PoisonProvider())
        assert err.value.iteration == 0

    def test_sketch_resolution_must_be_pow2_multiple(self):
        mask = np.zeros((96, 96))
        mask[30:60, 30:60] = 1.0
        with pytest.raises(ValueError, match="power of 2|multiple"):
            fit(sketch_from_mask(mask), None, FitConfig(iterations=1))
