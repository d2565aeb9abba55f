"""Scalar objectives composed over renders, embeddings, and poses.

The silhouette IoU loss, its multi-scale pyramid sum, the embedding cosine
loss and its multi-view average, the wrapped-angle viewpoint MSE, the
weighted total, and the multi-view style loss. Torch variants (suffix _t)
are differentiable and used inside optimization loops; the plain variants
take package domain types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .camera import CameraPose, wrap_azimuth_delta
from .mesh import Mesh
from .render import (
    RenderConfig,
    SilhouetteImage,
    downsample_t,
    render_flat_grey_t,
    render_silhouette_t,
)

__all__ = [
    "LossWeights",
    "iou_loss",
    "iou_loss_t",
    "build_pyramid",
    "multiscale_iou_loss",
    "multiscale_iou_loss_t",
    "clip_loss",
    "clip_loss_t",
    "multiview_clip_loss",
    "multiview_clip_loss_t",
    "viewpoint_loss",
    "viewpoint_loss_t",
    "total_loss",
    "style_loss",
    "style_loss_t",
]

_UNION_FLOOR = 1e-8


@dataclass(frozen=True)
class LossWeights:
    """Weights of the four total-loss components plus per-pyramid-level
    weights for the multi-scale IoU term."""

    lambda_ms: float = 0.1
    lambda_r: float = 0.1
    lambda_clip: float = 0.1
    lambda_v: float = 0.1
    lambda_scales: tuple[float, ...] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        weights = (self.lambda_ms, self.lambda_r, self.lambda_clip, self.lambda_v)
        if any(w < 0 for w in weights) or any(s < 0 for s in self.lambda_scales):
            raise ValueError("loss weights must be non-negative")
        if not any(w > 0 for w in weights):
            raise ValueError("at least one loss weight must be positive")
        if not self.lambda_scales:
            raise ValueError("need at least one pyramid level")
        object.__setattr__(self, "lambda_scales", tuple(self.lambda_scales))

    @property
    def pyramid_depth(self) -> int:
        return len(self.lambda_scales)


def iou_loss_t(s1: torch.Tensor, s2: torch.Tensor) -> torch.Tensor:
    """1 - |s1*s2| / |s1 + s2 - s1*s2| for soft occupancy images."""
    if s1.shape != s2.shape:
        raise ValueError(f"shape mismatch: {tuple(s1.shape)} vs {tuple(s2.shape)}")
    prod = s1 * s2
    inter = prod.sum()
    union = (s1 + s2 - prod).sum()
    if float(union.detach()) <= 0.0:
        raise ValueError("both images are all-zero; IoU is undefined")
    return 1.0 - inter / union.clamp_min(_UNION_FLOOR)


def iou_loss(s1: SilhouetteImage, s2: SilhouetteImage) -> float:
    return float(
        iou_loss_t(torch.as_tensor(s1.values), torch.as_tensor(s2.values))
    )


def build_pyramid(img: torch.Tensor, depth: int) -> list[torch.Tensor]:
    """[full, /2, /4, ...] with `depth` levels via box downsampling."""
    levels = [img]
    for _ in range(depth - 1):
        levels.append(downsample_t(levels[-1], 2))
    return levels


def multiscale_iou_loss_t(pred_pyramid, target_pyramid, lambda_scales) -> torch.Tensor:
    if len(pred_pyramid) != len(target_pyramid) or len(pred_pyramid) != len(
        lambda_scales
    ):
        raise ValueError("pyramid depth mismatch")
    total = None
    for pred, target, lam in zip(pred_pyramid, target_pyramid, lambda_scales):
        if pred.shape != target.shape:
            raise ValueError(
                f"pyramid level shape mismatch: {tuple(pred.shape)} vs "
                f"{tuple(target.shape)}"
            )
        term = lam * iou_loss_t(pred, target)
        total = term if total is None else total + term
    return total


def multiscale_iou_loss(
    pred_pyramid: list[SilhouetteImage],
    target_pyramid: list[SilhouetteImage],
    lambda_scales,
) -> float:
    return float(
        multiscale_iou_loss_t(
            [torch.as_tensor(p.values) for p in pred_pyramid],
            [torch.as_tensor(t.values) for t in target_pyramid],
            lambda_scales,
        )
    )


def _check_unit(vec: np.ndarray, name: str):
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > 1e-4:
        raise ValueError(f"{name} is not unit-norm (|v| = {norm:.6f})")


def clip_loss(img_embed, txt_embed) -> float:
    """1 - cosine similarity of two unit embedding vectors."""
    a = np.asarray(getattr(img_embed, "values", img_embed), dtype=np.float64)
    b = np.asarray(getattr(txt_embed, "values", txt_embed), dtype=np.float64)
    _check_unit(a, "image embedding")
    _check_unit(b, "text embedding")
    return float(1.0 - a @ b)


def clip_loss_t(img_embed: torch.Tensor, txt_embed: torch.Tensor) -> torch.Tensor:
    norm = float(img_embed.detach().norm())
    if abs(norm - 1.0) > 1e-4:
        raise ValueError(f"image embedding is not unit-norm (|v| = {norm:.6f})")
    return 1.0 - (img_embed * txt_embed).sum()


def multiview_clip_loss_t(
    verts: torch.Tensor,
    faces: np.ndarray,
    prompt: str,
    poses,
    provider,
    cfg: RenderConfig,
    render_mode: str = "gray",
) -> torch.Tensor:
    """Average the render embeddings over views, renormalize, compare to
    the prompt embedding; differentiable through the renders."""
    if not poses:
        raise ValueError("need at least one pose")
    embeds = []
    for i, pose in enumerate(poses):
        try:
            if render_mode == "gray":
                img = render_flat_grey_t(verts, faces, pose, cfg)
            elif render_mode == "silhouette":
                img = render_silhouette_t(verts, faces, pose, cfg)
            else:
                raise ValueError(f"unknown render mode {render_mode!r}")
            embeds.append(provider.embed_image_t(img))
        except ValueError:
            raise
        except Exception as exc:
            raise RuntimeError(f"embedding failed for pose {i}: {exc}") from exc
    mean = torch.stack(embeds).mean(dim=0)
    mean = mean / mean.norm().clamp_min(1e-8)
    text = torch.as_tensor(provider.embed_text(prompt).values, dtype=mean.dtype)
    return 1.0 - (mean * text).sum()


def multiview_clip_loss(
    mesh: Mesh, prompt: str, poses, provider, cfg: RenderConfig,
    render_mode: str = "gray",
) -> float:
    with torch.no_grad():
        return float(
            multiview_clip_loss_t(
                torch.as_tensor(mesh.vertices), mesh.faces, prompt, poses,
                provider, cfg, render_mode,
            )
        )


def viewpoint_loss(pred: CameraPose, gt: CameraPose) -> float:
    """Mean of squared wrapped-azimuth and elevation errors, in degrees^2."""
    daz = float(wrap_azimuth_delta(pred.azimuth_deg - gt.azimuth_deg))
    del_ = pred.elevation_deg - gt.elevation_deg
    return 0.5 * (daz * daz + del_ * del_)


def viewpoint_loss_t(
    pred_az: torch.Tensor, pred_el: torch.Tensor,
    gt_az: torch.Tensor, gt_el: torch.Tensor,
) -> torch.Tensor:
    """Batched differentiable viewpoint MSE (degrees^2)."""
    daz = torch.remainder(pred_az - gt_az + 180.0, 360.0) - 180.0
    del_ = pred_el - gt_el
    return 0.5 * (daz * daz + del_ * del_).mean()


def total_loss(parts: dict, w: LossWeights):
    """lambda_ms*L_ms + lambda_r*L_r + lambda_clip*L_clip + lambda_v*L_v.

    Works on floats or torch scalars; raises naming the first non-finite
    component.
    """
    for name in ("ms", "r", "clip", "v"):
        if name in parts and parts[name] is not None:
            value = parts[name]
            if hasattr(value, "detach"):
                value = value.detach()
            if not math.isfinite(float(value)):
                raise ValueError(f"loss component {name!r} is not finite")
    zero = 0.0
    total = (
        w.lambda_ms * parts.get("ms", zero)
        + w.lambda_r * parts.get("r", zero)
        + w.lambda_clip * parts.get("clip", zero)
        + w.lambda_v * parts.get("v", zero)
    )
    return total


def style_loss_t(renders, prompt: str, provider) -> torch.Tensor:
    """Mean over views of (1 - cos(render embedding, prompt embedding))."""
    if not renders:
        raise ValueError("need at least one render")
    terms = []
    text = None
    for i, img in enumerate(renders):
        try:
            emb = provider.embed_image_t(img)
        except Exception as exc:
            raise RuntimeError(f"embedding failed for view {i}: {exc}") from exc
        if text is None:
            text = torch.as_tensor(
                provider.embed_text(prompt).values, dtype=emb.dtype
            )
        terms.append(1.0 - (emb * text).sum())
    return torch.stack(terms).mean()


def style_loss(renders: list[np.ndarray], prompt: str, provider) -> float:
    with torch.no_grad():
        return float(
            style_loss_t([torch.as_tensor(r) for r in renders], prompt, provider)
        )
