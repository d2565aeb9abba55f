"""Generalized sketch-to-mesh network and its checkpoint format.

A tiny convolutional encoder (4 stride-2 stages, global average pool)
produces L2-normalized shape and view codes. The decoder predicts vertex
offsets in three cascaded stages at icosphere subdivisions 1 -> 2 -> 3,
upsampling coarser offsets to the finer vertex set by midpoint (edge
parent) interpolation; accumulated offsets are bounded by tanh scaling.
The viewpoint head regresses azimuth as an atan2 of a 2-vector (wrap-safe)
and elevation through a scaled tanh.

Desk-scale substitutions vs the reference setup: latent dimension 128
(reference 512), ResNet encoder replaced by the 4-stage conv stack with
an identical contract.

Checkpoint layout: magic "SFCK", u32 version, u32 manifest length, JSON
manifest (tensor names/shapes in order, config snapshot, dataset
fingerprint, optional training state), then little-endian f32 blobs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .camera import CameraPose, CANONICAL_DISTANCE
from .errors import CheckpointError
from .mesh import Mesh, icosphere_levels
from .sketch import Sketch

__all__ = [
    "LatentCodes",
    "ModelConfig",
    "SketchToMeshModel",
    "encode",
    "decode",
    "predict_viewpoint",
    "infer",
    "save_checkpoint",
    "load_checkpoint",
]

_MAGIC = b"SFCK"
_VERSION = 1

LATENT_DIM = 128
TEMPLATE_SUBDIV = 3
OFFSET_BOUND = 0.75


@dataclass
class LatentCodes:
    z_s: np.ndarray
    z_v: np.ndarray

    def __post_init__(self):
        for name in ("z_s", "z_v"):
            v = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            norm = float(np.linalg.norm(v))
            if abs(norm - 1.0) > 1e-5:
                raise ValueError(f"{name} must be unit-norm, |v| = {norm:.8f}")
            setattr(self, name, v)


@dataclass(frozen=True)
class ModelConfig:
    resolution: int = 64
    latent_dim: int = LATENT_DIM
    channels: tuple[int, ...] = (16, 32, 64, 128)
    seed: int = 0

    def __post_init__(self):
        if self.resolution < 16 or self.resolution & (self.resolution - 1):
            raise ValueError("resolution must be a power of 2, >= 16")

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "latent_dim": self.latent_dim,
            "channels": list(self.channels),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            resolution=d["resolution"],
            latent_dim=d["latent_dim"],
            channels=tuple(d["channels"]),
            seed=d.get("seed", 0),
        )


class SketchEncoder(nn.Module):
    """4 stride-2 conv stages + global pool + two normalized linear heads."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        layers = []
        previous = 1
        for ch in cfg.channels:
            layers += [
                nn.Conv2d(previous, ch, kernel_size=3, stride=2, padding=1),
                nn.ReLU(inplace=True),
            ]
            previous = ch
        self.stages = nn.Sequential(*layers)
        self.head_shape = nn.Linear(previous, cfg.latent_dim)
        self.head_view = nn.Linear(previous, cfg.latent_dim)

    def forward(self, x: torch.Tensor):
        h = self.stages(x)
        pooled = h.mean(dim=(2, 3))
        z_s = torch.nn.functional.normalize(self.head_shape(pooled), dim=-1)
        z_v = torch.nn.functional.normalize(self.head_view(pooled), dim=-1)
        return z_s, z_v


class MeshDecoder(nn.Module):
    """Cascaded offset stages over icosphere subdivisions 1 -> 2 -> 3."""

    def __init__(self, cfg: ModelConfig, hidden: int = 256):
        super().__init__()
        levels = icosphere_levels(TEMPLATE_SUBDIV)
        self.register_buffer(
            "template",
            torch.as_tensor(levels[-1][0], dtype=torch.float32),
            persistent=False,
        )
        self._faces = levels[-1][1]
        self.stage_sizes = []
        self.stages = nn.ModuleList()
        parents = []
        for level in (1, 2, 3):
            n_verts = len(levels[level][0])
            self.stage_sizes.append(n_verts)
            out = nn.Linear(hidden, n_verts * 3)
            # zero output layers: training starts from the exact template
            nn.init.zeros_(out.weight)
            nn.init.zeros_(out.bias)
            self.stages.append(
                nn.Sequential(
                    nn.Linear(cfg.latent_dim, hidden),
                    nn.ReLU(inplace=True),
                    out,
                )
            )
            parents.append(levels[level][2])
        # midpoint upsampling indices from level L to L+1
        for i, level in enumerate((2, 3)):
            pairs = torch.as_tensor(parents[i + 1], dtype=torch.long)
            self.register_buffer(f"parents_{level}", pairs, persistent=False)

    @property
    def faces(self) -> np.ndarray:
        return self._faces

    def _upsample(self, offsets: torch.Tensor, level: int) -> torch.Tensor:
        pairs = getattr(self, f"parents_{level}")
        new = 0.5 * (offsets[:, pairs[:, 0]] + offsets[:, pairs[:, 1]])
        return torch.cat([offsets, new], dim=1)

    def forward(self, z_s: torch.Tensor) -> torch.Tensor:
        """(B, latent) -> bounded offsets (B, 642, 3)."""
        b = z_s.shape[0]
        acc = self.stages[0](z_s).reshape(b, self.stage_sizes[0], 3)
        acc = self._upsample(acc, 2)
        acc = acc + self.stages[1](z_s).reshape(b, self.stage_sizes[1], 3)
        acc = self._upsample(acc, 3)
        acc = acc + self.stages[2](z_s).reshape(b, self.stage_sizes[2], 3)
        return OFFSET_BOUND * torch.tanh(acc)

    def vertices(self, z_s: torch.Tensor) -> torch.Tensor:
        return self.template.unsqueeze(0) + self(z_s)


class ViewpointHead(nn.Module):
    """Two linear layers; azimuth via atan2 of a predicted 2-vector."""

    def __init__(self, cfg: ModelConfig, hidden: int = 64):
        super().__init__()
        self.fc1 = nn.Linear(cfg.latent_dim, hidden)
        self.fc2 = nn.Linear(hidden, 3)
        # zero output: predictions start at azimuth 0, elevation 0
        nn.init.zeros_(self.fc2.weight)
        nn.init.zeros_(self.fc2.bias)

    def forward(self, z_v: torch.Tensor):
        out = self.fc2(torch.relu(self.fc1(z_v)))
        # +1 bias on the cosine channel picks azimuth 0 for a zero network
        az = torch.atan2(out[:, 0], out[:, 1] + 1.0) * (180.0 / math.pi)
        az = torch.remainder(az, 360.0)
        el = 90.0 * torch.tanh(out[:, 2])
        return az, el


class SketchToMeshModel(nn.Module):
    def __init__(self, cfg: ModelConfig | None = None):
        super().__init__()
        self.cfg = cfg or ModelConfig()
        torch.manual_seed(self.cfg.seed)
        self.encoder = SketchEncoder(self.cfg)
        self.decoder = MeshDecoder(self.cfg)
        self.viewpoint = ViewpointHead(self.cfg)

    def forward(self, sketches: torch.Tensor):
        """(B,1,H,W) -> (verts (B,642,3), az (B,), el (B,))."""
        z_s, z_v = self.encoder(sketches)
        verts = self.decoder.vertices(z_s)
        az, el = self.viewpoint(z_v)
        return verts, az, el


def _sketch_batch(sketch: Sketch, resolution: int) -> torch.Tensor:
    if sketch.values.shape != (resolution, resolution):
        raise ValueError(
            f"sketch is {sketch.values.shape}, model expects "
            f"({resolution},{resolution}); resample before encoding"
        )
    return torch.as_tensor(sketch.values, dtype=torch.float32).reshape(
        1, 1, resolution, resolution
    )


def encode(sketch: Sketch, model: SketchToMeshModel) -> LatentCodes:
    with torch.no_grad():
        z_s, z_v = model.encoder(_sketch_batch(sketch, model.cfg.resolution))
    return LatentCodes(z_s[0].double().numpy(), z_v[0].double().numpy())


def decode(z_s, model: SketchToMeshModel) -> Mesh:
    z = torch.as_tensor(
        np.asarray(getattr(z_s, "z_s", z_s), dtype=np.float32)
    ).reshape(1, -1)
    if abs(float(z.norm()) - 1.0) > 1e-4:
        raise ValueError("shape code must be unit-norm")
    with torch.no_grad():
        verts = model.decoder.vertices(z)[0]
    if not torch.isfinite(verts).all():
        raise ValueError("decoder produced non-finite vertices")
    return Mesh(verts.double().numpy(), model.decoder.faces.copy())


def predict_viewpoint(z_v, model: SketchToMeshModel) -> CameraPose:
    z = torch.as_tensor(
        np.asarray(getattr(z_v, "z_v", z_v), dtype=np.float32)
    ).reshape(1, -1)
    if abs(float(z.norm()) - 1.0) > 1e-4:
        raise ValueError("view code must be unit-norm")
    with torch.no_grad():
        az, el = model.viewpoint(z)
    return CameraPose(float(az[0]), float(el[0]), CANONICAL_DISTANCE)


def infer(sketch: Sketch, model: SketchToMeshModel):
    """Single forward pass: sketch -> (mesh, predicted pose)."""
    with torch.no_grad():
        batch = _sketch_batch(sketch, model.cfg.resolution)
        verts, az, el = model(batch)
    mesh = Mesh(verts[0].double().numpy(), model.decoder.faces.copy())
    pose = CameraPose(float(az[0]), float(el[0]), CANONICAL_DISTANCE)
    return mesh, pose


def _state_tensors(model: SketchToMeshModel, optimizer=None):
    tensors: list[tuple[str, torch.Tensor]] = list(model.state_dict().items())
    if optimizer is not None:
        state = optimizer.state_dict()["state"]
        params = [
            name for name, _ in model.named_parameters()
        ]
        for idx, name in enumerate(params):
            if idx in state:
                tensors.append((f"optim.{name}.exp_avg", state[idx]["exp_avg"]))
                tensors.append(
                    (f"optim.{name}.exp_avg_sq", state[idx]["exp_avg_sq"])
                )
                tensors.append(
                    (f"optim.{name}.step", state[idx]["step"].reshape(1))
                )
    return tensors


def save_checkpoint(
    model: SketchToMeshModel,
    train_config: dict | None = None,
    dataset_fingerprint: str = "",
    train_state: dict | None = None,
    optimizer=None,
) -> bytes:
    tensors = _state_tensors(model, optimizer)
    manifest = {
        "format_version": _VERSION,
        "model_config": model.cfg.to_dict(),
        "train_config": train_config or {},
        "dataset_fingerprint": dataset_fingerprint,
        "train_state": train_state or {},
        "tensors": [
            {"name": name, "shape": list(t.shape)} for name, t in tensors
        ],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    out = [_MAGIC, struct.pack("<II", _VERSION, len(blob)), blob]
    for _, t in tensors:
        out.append(
            np.ascontiguousarray(t.detach().numpy(), dtype="<f4").tobytes()
        )
    return b"".join(out)


def load_checkpoint(data: bytes):
    """bytes -> (model, manifest, extra_tensors).

    extra_tensors holds non-model entries (optimizer moments) by name.
    """
    if len(data) < 12 or data[:4] != _MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    version, mlen = struct.unpack("<II", data[4:12])
    if version != _VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {version} (expected {_VERSION})"
        )
    try:
        manifest = json.loads(data[12:12 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from exc
    model = SketchToMeshModel(ModelConfig.from_dict(manifest["model_config"]))
    offset = 12 + mlen
    tensors: dict[str, torch.Tensor] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = data[offset:offset + 4 * count]
        if len(raw) != 4 * count:
            raise CheckpointError(f"truncated tensor {entry['name']}")
        offset += 4 * count
        arr = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        tensors[entry["name"]] = torch.as_tensor(arr)
    state = {
        k: v for k, v in tensors.items() if not k.startswith("optim.")
    }
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"weight shapes do not match: {exc}") from exc
    extra = {k: v for k, v in tensors.items() if k.startswith("optim.")}
    return model, manifest, extra
