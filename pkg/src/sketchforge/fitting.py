"""Per-object fit: deform the template icosphere to match one sketch.

Optimizes per-vertex offsets with Adam against the multi-scale silhouette
IoU at the sketch's pose, the flatten/Laplacian regularizers, and the
multi-view embedding loss against the text prompt. The viewpoint term of
the total loss has no role here (there is no network predicting poses).

Large deformations need long-range coverage gradients, so the soft
rasterization sharpness anneals geometrically from ``sigma_start`` down to
``sigma`` over the first ``anneal_fraction`` of the iterations and holds
there; the Adam step follows a cosine decay to a fifth of its initial
value. Both schedules are part of the fit contract and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import torch

from .camera import CameraPose, canonical_pose, sample_poses
from .embedding import toy_provider
from .errors import DivergenceError, TransportError
from .losses import (
    LossWeights,
    build_pyramid,
    multiscale_iou_loss_t,
    multiview_clip_loss_t,
    total_loss,
)
from .mesh import Mesh, make_icosphere
from .regularizers import flatten_energy_t, laplacian_energy_t, regularizer_tensors
from .render import RenderConfig, downsample_t, render_silhouette_t
from .sketch import Sketch

__all__ = ["FitConfig", "FitTrace", "FitResult", "fit", "DEFAULT_FIT_WEIGHTS"]

# fit-mode defaults: silhouette fidelity leads, regularizers keep the
# surface sane without fighting large deformations, embedding guidance at
# the reference weight
DEFAULT_FIT_WEIGHTS = LossWeights(
    lambda_ms=1.0, lambda_r=1e-4, lambda_clip=0.1, lambda_v=0.0
)

TEMPLATE_SUBDIVISIONS = 3


@dataclass(frozen=True)
class FitConfig:
    iterations: int = 600
    step_size: float = 0.01
    weights: LossWeights = field(default_factory=lambda: DEFAULT_FIT_WEIGHTS)
    n_views: int = 3
    seed: int = 0
    resolution: int = 64
    clip_resolution: int = 32
    prompt: str = ""
    clip_render_mode: str = "gray"  # or "silhouette"
    sigma: float = 1e-4
    sigma_start: float = 3e-3
    anneal_fraction: float = 0.6
    gamma: float = 1e-4

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.resolution < 2 or self.resolution & (self.resolution - 1):
            raise ValueError("resolution must be a power of 2")
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if not 0 < self.anneal_fraction <= 1:
            raise ValueError("anneal_fraction must be in (0,1]")
        if self.sigma_start < self.sigma:
            raise ValueError("sigma_start must be >= sigma")

    def sigma_at(self, iteration: int) -> float:
        if self.iterations == 1:
            return self.sigma
        t = min(1.0, iteration / (self.anneal_fraction * (self.iterations - 1)))
        return self.sigma_start * (self.sigma / self.sigma_start) ** t

    def step_at(self, iteration: int) -> float:
        floor = 0.2 * self.step_size
        return floor + 0.5 * (self.step_size - floor) * (
            1.0 + math.cos(math.pi * iteration / self.iterations)
        )

    def clip_render_config(self, sigma: float | None = None) -> RenderConfig:
        return RenderConfig(
            self.clip_resolution, self.clip_resolution,
            sigma or self.sigma, self.gamma,
        )


@dataclass
class FitTrace:
    total: list[float] = field(default_factory=list)
    ms: list[float] = field(default_factory=list)
    reg: list[float] = field(default_factory=list)
    clip: list[float] = field(default_factory=list)
    best_total: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def append(self, total, ms, reg, clip):
        self.total.append(total)
        self.ms.append(ms)
        self.reg.append(reg)
        self.clip.append(clip)
        best = min(self.best_total[-1], total) if self.best_total else total
        self.best_total.append(best)

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "ms": self.ms,
            "reg": self.reg,
            "clip": self.clip,
            "best_total": self.best_total,
            "warnings": self.warnings,
        }


@dataclass
class FitResult:
    mesh: Mesh
    trace: FitTrace


def _sketch_target(sketch: Sketch, resolution: int) -> torch.Tensor:
    values = torch.as_tensor(sketch.values, dtype=torch.float64)
    h, w = values.shape
    if h != w:
        raise ValueError("sketch must be square")
    if h < resolution or h % resolution:
        raise ValueError(
            f"sketch size {h} is not an integer multiple of the render "
            f"resolution {resolution}"
        )
    factor = h // resolution
    if factor & (factor - 1):
        raise ValueError(
            f"sketch/render size ratio must be a power of 2, got {factor}"
        )
    return downsample_t(values, factor)


def fit(
    sketch: Sketch,
    pose: CameraPose | None,
    cfg: FitConfig,
    provider=None,
    progress=None,
) -> FitResult:
    """Deform the template icosphere to match the sketch (plus prompt).

    `progress`, when given, is called as progress(iteration, total).
    """
    pose = pose or canonical_pose()
    provider = provider or toy_provider()
    grad_provider = provider
    trace = FitTrace()
    use_clip = cfg.weights.lambda_clip > 0 and bool(cfg.prompt)
    if use_clip and not getattr(provider, "supports_image_gradient", False):
        grad_provider = toy_provider()
        trace.warnings.append(
            "provider serves no image gradients; embedding term uses the "
            "toy provider"
        )

    template = make_icosphere(TEMPLATE_SUBDIVISIONS)
    base = torch.as_tensor(template.vertices)
    faces = template.faces
    reg = regularizer_tensors(template)
    depth = cfg.weights.pyramid_depth
    target_pyr = build_pyramid(_sketch_target(sketch, cfg.resolution), depth)

    offsets = torch.zeros_like(base, requires_grad=True)
    optim = torch.optim.Adam([offsets], lr=cfg.step_size, betas=(0.9, 0.999))

    for it in range(cfg.iterations):
        sigma = cfg.sigma_at(it)
        render_cfg = RenderConfig(
            cfg.resolution, cfg.resolution, sigma, cfg.gamma
        )
        for group in optim.param_groups:
            group["lr"] = cfg.step_at(it)
        optim.zero_grad()
        verts = base + offsets
        sil = render_silhouette_t(verts, faces, pose, render_cfg)
        ms = multiscale_iou_loss_t(
            build_pyramid(sil, depth), target_pyr, cfg.weights.lambda_scales
        )
        reg_loss = flatten_energy_t(verts, reg) + laplacian_energy_t(verts, reg)
        clip_term = None
        if use_clip:
            poses = sample_poses(cfg.n_views, [cfg.seed, it])
            try:
                clip_term = multiview_clip_loss_t(
                    verts, faces, cfg.prompt, poses, grad_provider,
                    cfg.clip_render_config(), cfg.clip_render_mode,
                )
            except (RuntimeError, TransportError) as exc:
                trace.warnings.append(f"iteration {it}: clip term skipped: {exc}")
        parts = {"ms": ms, "r": reg_loss}
        if clip_term is not None:
            parts["clip"] = clip_term
        try:
            loss = total_loss(parts, cfg.weights)
        except ValueError as exc:
            raise DivergenceError(it, str(exc)) from exc
        trace.append(
            float(loss.detach()), float(ms.detach()), float(reg_loss.detach()),
            float(clip_term.detach()) if clip_term is not None else float("nan"),
        )
        loss.backward()
        optim.step()
        if progress is not None:
            progress(it + 1, cfg.iterations)

    final = Mesh((base + offsets).detach().numpy(), faces.copy())
    return FitResult(final, trace)
