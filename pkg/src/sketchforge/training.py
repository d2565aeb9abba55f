"""End-to-end training of the sketch-to-mesh network, plus evaluation.

Per batch the decoded meshes are rendered at the ground-truth poses and
compared to the sketch pyramids (multi-scale IoU); flatten/Laplacian
regularizers, the multi-view embedding term against "A grey [category]",
and the wrapped-angle viewpoint MSE complete the four-component total.
Adam with step decay; reference-scale values (2000 epochs, decay every
800) are scaled to the desk defaults (500 / 200).

Training is deterministic given (seed, config, dataset): shuffling and
view sampling derive from (seed, epoch) counters, so resuming from a
checkpoint reproduces the uninterrupted run exactly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .camera import CameraPose, CANONICAL_DISTANCE, ELEVATION_RANGE, wrap_azimuth_delta
from .embedding import toy_provider
from .losses import LossWeights, total_loss, viewpoint_loss_t
from .mesh import make_icosphere
from .network import (
    ModelConfig,
    SketchToMeshModel,
    infer,
    load_checkpoint,
    save_checkpoint,
)
from .procgen import DatasetInstance, load_dataset
from .regularizers import (
    flatten_energy_batch,
    laplacian_energy_batch,
    regularizer_tensors,
)
from .render import (
    BACKGROUND_GREY,
    FLAT_GREY,
    RenderConfig,
    downsample_t,
    render_silhouette_batch,
)
from .sketch import sketch_from_mask
from .voxel import mesh_bounds, voxel_iou, voxelize

__all__ = [
    "TrainConfig",
    "TrainResult",
    "train",
    "evaluate",
    "dataset_fingerprint",
]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500  # reference scale: 2000
    batch_size: int = 20
    learning_rate: float = 1e-4
    lr_decay: float = 0.3
    decay_every_epochs: int = 200  # reference scale: 800
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    resolution: int = 64
    n_views: int = 3
    clip_resolution: int = 32
    weights: LossWeights = field(default_factory=LossWeights)
    prompt_template: str = "A grey {category}"
    clip_render_mode: str = "gray"
    sigma: float = 1e-4
    gamma: float = 1e-4

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.learning_rate * self.lr_decay ** (
            epoch // self.decay_every_epochs
        )

    def to_dict(self) -> dict:
        d = {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "lr_decay": self.lr_decay,
            "decay_every_epochs": self.decay_every_epochs,
            "betas": list(self.betas),
            "seed": self.seed,
            "resolution": self.resolution,
            "n_views": self.n_views,
            "clip_resolution": self.clip_resolution,
            "prompt_template": self.prompt_template,
            "clip_render_mode": self.clip_render_mode,
            "sigma": self.sigma,
            "gamma": self.gamma,
            "weights": {
                "lambda_ms": self.weights.lambda_ms,
                "lambda_r": self.weights.lambda_r,
                "lambda_clip": self.weights.lambda_clip,
                "lambda_v": self.weights.lambda_v,
                "lambda_scales": list(self.weights.lambda_scales),
            },
        }
        return d


@dataclass
class TrainResult:
    checkpoint: bytes
    model: SketchToMeshModel
    metrics: list[dict]
    aborted_at_epoch: int | None = None


def dataset_fingerprint(instances: list[DatasetInstance]) -> str:
    """Stable content hash over every file of every instance."""
    h = hashlib.sha256()
    for inst in sorted(instances, key=lambda i: str(i.path)):
        for f in sorted(inst.path.iterdir()):
            h.update(f.name.encode())
            h.update(hashlib.sha256(f.read_bytes()).digest())
    return h.hexdigest()


def _resolve_instances(dataset) -> list[DatasetInstance]:
    if isinstance(dataset, (str, Path)):
        return load_dataset(dataset)
    return list(dataset)


def _load_tensors(instances, cfg: TrainConfig):
    sketches, azimuths, elevations, categories = [], [], [], []
    for inst in instances:
        mask = inst.load_sketch_mask()
        t = torch.as_tensor(mask, dtype=torch.float32)
        if t.shape[0] != cfg.resolution:
            if t.shape[0] % cfg.resolution:
                raise ValueError(
                    f"dataset sketch size {t.shape[0]} is not a multiple of "
                    f"the training resolution {cfg.resolution}"
                )
            t = downsample_t(t, t.shape[0] // cfg.resolution)
        sketches.append(t)
        azimuths.append(inst.pose.azimuth_deg)
        elevations.append(inst.pose.elevation_deg)
        categories.append(inst.category)
    return (
        torch.stack(sketches),
        torch.as_tensor(azimuths, dtype=torch.float32),
        torch.as_tensor(elevations, dtype=torch.float32),
        categories,
    )


def _batched_iou_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-image soft IoU loss, averaged over the batch: (B,H,W)x2 -> scalar."""
    prod = pred * target
    inter = prod.sum(dim=(-2, -1))
    union = (pred + target - prod).sum(dim=(-2, -1)).clamp_min(1e-8)
    return (1.0 - inter / union).mean()


def _restore_optimizer(optimizer, model, extra: dict):
    params = list(model.parameters())
    names = [n for n, _ in model.named_parameters()]
    state = optimizer.state_dict()
    for idx, name in enumerate(names):
        avg = extra.get(f"optim.{name}.exp_avg")
        avg_sq = extra.get(f"optim.{name}.exp_avg_sq")
        step = extra.get(f"optim.{name}.step")
        if avg is None or avg_sq is None or step is None:
            continue
        state["state"][idx] = {
            "step": step.reshape(()).clone(),
            "exp_avg": avg.clone(),
            "exp_avg_sq": avg_sq.clone(),
        }
    optimizer.load_state_dict(state)
    _ = params  # ordering contract documented above


def train(
    dataset,
    config: TrainConfig | None = None,
    provider=None,
    resume_from: bytes | None = None,
    progress=None,
) -> TrainResult:
    """Train on a dataset directory or instance list; returns checkpoint
    bytes (with optimizer state for resume), the model, and per-epoch
    metrics with all four loss components."""
    cfg = config or TrainConfig()
    provider = provider or toy_provider()
    if not getattr(provider, "supports_image_gradient", False):
        provider = toy_provider()
    instances = _resolve_instances(dataset)
    if not instances:
        raise ValueError("dataset is empty")
    fingerprint = dataset_fingerprint(instances)
    sketches, gt_az, gt_el, categories = _load_tensors(instances, cfg)
    n = len(instances)

    prompts = {}
    for cat in sorted(set(categories)):
        emb = provider.embed_text(cfg.prompt_template.format(category=cat))
        prompts[cat] = torch.as_tensor(emb.values, dtype=torch.float64)
    prompt_mat = torch.stack([prompts[c] for c in categories])  # (N,D)

    start_epoch = 0
    if resume_from is not None:
        model, manifest, extra = load_checkpoint(resume_from)
        if manifest["dataset_fingerprint"] != fingerprint:
            raise ValueError("checkpoint was trained on a different dataset")
        start_epoch = int(manifest["train_state"].get("epoch", 0))
    else:
        model = SketchToMeshModel(ModelConfig(resolution=cfg.resolution, seed=cfg.seed))
        extra = {}
    optimizer = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=cfg.betas
    )
    if extra:
        _restore_optimizer(optimizer, model, extra)

    template = make_icosphere(3)
    reg = regularizer_tensors(template)
    render_cfg = RenderConfig(cfg.resolution, cfg.resolution, cfg.sigma, cfg.gamma)
    clip_cfg = RenderConfig(
        cfg.clip_resolution, cfg.clip_resolution, cfg.sigma, cfg.gamma
    )
    depth = cfg.weights.pyramid_depth
    target_pyramids = []
    level = sketches.double()
    for _ in range(depth):
        target_pyramids.append(level)
        level = downsample_t(level, 2)
    gt_poses = [
        CameraPose(float(a), float(e), CANONICAL_DISTANCE)
        for a, e in zip(gt_az, gt_el)
    ]

    metrics: list[dict] = []
    good_state = None
    aborted = None
    use_clip = cfg.weights.lambda_clip > 0

    for epoch in range(start_epoch, cfg.epochs):
        lr = cfg.lr_at(epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr
        order = np.random.default_rng([cfg.seed, 17, epoch]).permutation(n)
        view_rng = np.random.default_rng([cfg.seed, 23, epoch])
        sums = {"ms": 0.0, "r": 0.0, "clip": 0.0, "v": 0.0, "total": 0.0}
        batches = 0
        for s in range(0, n, cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            idx_t = torch.as_tensor(idx, dtype=torch.long)
            batch = sketches[idx_t].unsqueeze(1)
            optimizer.zero_grad()
            verts, az, el = model(batch)
            verts64 = verts.double()

            poses = [gt_poses[i] for i in idx]
            sil = render_silhouette_batch(verts64, template.faces, poses, render_cfg)
            ms = None
            pyr = sil
            for lam, target in zip(cfg.weights.lambda_scales, target_pyramids):
                term = lam * _batched_iou_loss(pyr, target[idx_t])
                ms = term if ms is None else ms + term
                pyr = downsample_t(pyr, 2)

            reg_loss = (
                flatten_energy_batch(verts64, reg)
                + laplacian_energy_batch(verts64, reg)
            ).mean()

            clip_term = torch.zeros((), dtype=torch.float64)
            if use_clip:
                embeds = []
                for _ in range(cfg.n_views):
                    vposes = [
                        CameraPose(
                            float(view_rng.uniform(0, 360)),
                            float(view_rng.uniform(*ELEVATION_RANGE)),
                            CANONICAL_DISTANCE,
                        )
                        for _ in idx
                    ]
                    view = render_silhouette_batch(
                        verts64, template.faces, vposes, clip_cfg
                    )
                    if cfg.clip_render_mode == "gray":
                        view = BACKGROUND_GREY + (FLAT_GREY - BACKGROUND_GREY) * view
                    embeds.append(_batch_embed(provider, view))
                mean = torch.stack(embeds).mean(dim=0)
                mean = mean / mean.norm(dim=-1, keepdim=True).clamp_min(1e-8)
                cos = (mean * prompt_mat[idx_t]).sum(dim=-1)
                clip_term = (1.0 - cos).mean()

            v_term = viewpoint_loss_t(
                az.double(), el.double(),
                gt_az[idx_t].double(), gt_el[idx_t].double(),
            )
            parts = {"ms": ms, "r": reg_loss, "clip": clip_term, "v": v_term}
            try:
                loss = total_loss(parts, cfg.weights)
            except ValueError:
                aborted = epoch
                break
            loss.backward()
            optimizer.step()
            for key, value in (("ms", ms), ("r", reg_loss), ("clip", clip_term),
                               ("v", v_term), ("total", loss)):
                sums[key] += float(value.detach())
            batches += 1
        if aborted is not None:
            break
        metrics.append(
            {"epoch": epoch, "lr": lr}
            | {k: v / max(batches, 1) for k, v in sums.items()}
        )
        good_state = (
            {k: v.clone() for k, v in model.state_dict().items()},
            optimizer.state_dict(),
            epoch + 1,
        )
        if progress is not None:
            progress(epoch + 1, cfg.epochs)

    if aborted is not None and good_state is not None:
        model.load_state_dict(good_state[0])
    final_epoch = good_state[2] if good_state else start_epoch
    checkpoint = save_checkpoint(
        model,
        train_config=cfg.to_dict(),
        dataset_fingerprint=fingerprint,
        train_state={"epoch": final_epoch, "aborted": aborted is not None},
        optimizer=optimizer if aborted is None else None,
    )
    return TrainResult(checkpoint, model, metrics, aborted)


def _batch_embed(provider, images: torch.Tensor) -> torch.Tensor:
    """(B,H,W) grayscale-as-color images -> (B,D) unit embeddings."""
    if hasattr(provider, "embed_images_t"):
        return provider.embed_images_t(images)
    return torch.stack([provider.embed_image_t(img) for img in images])


def evaluate(
    model: SketchToMeshModel,
    dataset,
    provider=None,
    n_views: int = 3,
    seed: int = 0,
    voxel_resolution: int = 32,
) -> dict:
    """Held-out metrics: voxel IoU (with template baseline), viewpoint MAE,
    and the embedding score (mean cosine between the category prompt and
    flat-grey render embeddings over seeded sampled views)."""
    provider = provider or toy_provider()
    instances = _resolve_instances(dataset)
    template = make_icosphere(3)
    ious, base_ious, az_errs, el_errs, clip_scores = [], [], [], [], []
    for k, inst in enumerate(instances):
        mask = inst.load_sketch_mask()
        t = torch.as_tensor(mask, dtype=torch.float64)
        if t.shape[0] != model.cfg.resolution:
            t = downsample_t(t, t.shape[0] // model.cfg.resolution)
        sketch = sketch_from_mask((t.numpy() >= 0.5).astype(np.float64))
        mesh, pose = infer(sketch, model)

        gt_mesh = inst.load_mesh()
        bounds = mesh_bounds(gt_mesh)
        gt_vox = inst.load_voxels()
        ious.append(voxel_iou(voxelize(mesh, voxel_resolution, bounds), gt_vox))
        base_ious.append(
            voxel_iou(voxelize(template, voxel_resolution, bounds), gt_vox)
        )
        az_errs.append(abs(float(wrap_azimuth_delta(
            pose.azimuth_deg - inst.pose.azimuth_deg
        ))))
        el_errs.append(abs(pose.elevation_deg - inst.pose.elevation_deg))

        prompt = provider.embed_text(f"A grey {inst.category}")
        rng = np.random.default_rng([seed, 29, k])
        cfg = RenderConfig(64, 64)
        verts = torch.as_tensor(mesh.vertices)
        for _ in range(n_views):
            vpose = CameraPose(
                float(rng.uniform(0, 360)),
                float(rng.uniform(*ELEVATION_RANGE)),
                CANONICAL_DISTANCE,
            )
            with torch.no_grad():
                sil = render_silhouette_batch(
                    verts.unsqueeze(0), mesh.faces, [vpose], cfg
                )[0]
                img = BACKGROUND_GREY + (FLAT_GREY - BACKGROUND_GREY) * sil
                emb = provider.embed_image_t(img)
            clip_scores.append(float(
                (emb * torch.as_tensor(prompt.values)).sum()
            ))
    return {
        "voxel_iou_mean": float(np.mean(ious)),
        "template_iou_mean": float(np.mean(base_ious)),
        "azimuth_mae_deg": float(np.mean(az_errs)),
        "elevation_mae_deg": float(np.mean(el_errs)),
        "clip_score": float(np.mean(clip_scores)),
        "count": len(instances),
    }
