"""Per-object neural-field stylization: vertex colors + normal displacement.

A coordinate network maps Fourier-encoded surface points to an RGB color
(sigmoid) and a scalar displacement along the vertex normal (tanh-bounded
by d_max). Each iteration re-applies the field to the constant base mesh,
renders a handful of resampled views, and descends the mean embedding
loss against the style prompt. Branch heads start at zero, so iteration
zero is exactly the identity case: mid-grey colors, zero displacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .camera import CameraPose, CANONICAL_DISTANCE
from .embedding import toy_provider
from .losses import style_loss_t
from .mesh import Mesh, vertex_normals
from .render import RenderConfig, render_color_batch

__all__ = [
    "StyleConfig",
    "StyleField",
    "fourier_encode",
    "evaluate_field",
    "stylize",
    "StylizeResult",
]


@dataclass(frozen=True)
class StyleConfig:
    prompt: str = "red"
    iterations: int = 300
    step_size: float = 5e-3
    views_per_iter: int = 5
    d_max: float | None = None  # default: 0.1 * bounding radius
    n_fourier: int = 128
    sigma_b: float = 5.0
    seed: int = 0
    resolution: int = 64
    elevation_center: float = 15.0
    elevation_jitter: float = 15.0

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.d_max is not None and not self.d_max > 0:
            raise ValueError("d_max must be positive")
        if self.n_fourier < 1:
            raise ValueError("need at least one Fourier feature")
        if not self.prompt.strip():
            raise ValueError("style prompt must be non-empty")


def fourier_encode(points: torch.Tensor, b_matrix: torch.Tensor) -> torch.Tensor:
    """[cos(2 pi B p); sin(2 pi B p)] for points (...,3), B (K,3) -> (...,2K)."""
    proj = 2.0 * math.pi * points @ b_matrix.T
    return torch.cat([torch.cos(proj), torch.sin(proj)], dim=-1)


class StyleField(nn.Module):
    """Fourier-feature trunk with color and displacement branches."""

    def __init__(self, cfg: StyleConfig, d_max: float):
        super().__init__()
        rng = np.random.default_rng([cfg.seed, 101])
        b = cfg.sigma_b * rng.standard_normal((cfg.n_fourier, 3))
        self.register_buffer(
            "b_matrix", torch.as_tensor(b, dtype=torch.float64)
        )
        self.d_max = d_max
        width = 128
        torch.manual_seed(cfg.seed)
        self.trunk = nn.Sequential(
            nn.Linear(2 * cfg.n_fourier, width), nn.ReLU(inplace=True),
            nn.Linear(width, width), nn.ReLU(inplace=True),
            nn.Linear(width, width), nn.ReLU(inplace=True),
        ).double()
        self.head_color = nn.Linear(width, 3).double()
        self.head_disp = nn.Linear(width, 1).double()
        # zero heads: the un-optimized field is the documented identity
        # (mid-grey color, zero displacement)
        nn.init.zeros_(self.head_color.weight)
        nn.init.zeros_(self.head_color.bias)
        nn.init.zeros_(self.head_disp.weight)
        nn.init.zeros_(self.head_disp.bias)

    def forward(self, points: torch.Tensor):
        h = self.trunk(fourier_encode(points, self.b_matrix))
        colors = torch.sigmoid(self.head_color(h))
        disp = self.d_max * torch.tanh(self.head_disp(h)).squeeze(-1)
        return colors, disp


def evaluate_field(field: StyleField, points: np.ndarray):
    """(N,3) points -> (colors (N,3) in [0,1], displacement (N,) bounded)."""
    with torch.no_grad():
        colors, disp = field(torch.as_tensor(points, dtype=torch.float64))
    return colors.numpy(), disp.numpy()


@dataclass
class StyleTrace:
    loss: list[float] = field(default_factory=list)
    best_loss: list[float] = field(default_factory=list)
    max_disp: list[float] = field(default_factory=list)
    color_min: list[float] = field(default_factory=list)
    color_max: list[float] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def append(self, loss, disp, colors):
        self.loss.append(loss)
        best = min(self.best_loss[-1], loss) if self.best_loss else loss
        self.best_loss.append(best)
        self.max_disp.append(float(np.abs(disp).max()))
        self.color_min.append(float(colors.min()))
        self.color_max.append(float(colors.max()))

    def to_dict(self) -> dict:
        return {
            "loss": self.loss,
            "best_loss": self.best_loss,
            "max_disp": self.max_disp,
            "color_min": self.color_min,
            "color_max": self.color_max,
            "warnings": self.warnings,
        }


@dataclass
class StylizeResult:
    mesh: Mesh
    trace: StyleTrace
    d_max: float


def stylize(
    mesh: Mesh,
    cfg: StyleConfig,
    provider=None,
    render_cfg: RenderConfig | None = None,
    progress=None,
) -> StylizeResult:
    """Optimize a style field for the mesh against the prompt; returns the
    colored, displaced mesh (topology unchanged) and the loss trace."""
    provider = provider or toy_provider()
    trace = StyleTrace()
    if not getattr(provider, "supports_image_gradient", False):
        provider = toy_provider()
        trace.warnings.append(
            "provider serves no image gradients; stylization uses the toy "
            "provider"
        )
    render_cfg = render_cfg or RenderConfig(cfg.resolution, cfg.resolution)
    d_max = cfg.d_max or 0.1 * max(mesh.bounding_radius(), 1e-9)
    field_net = StyleField(cfg, d_max)
    base = torch.as_tensor(mesh.vertices, dtype=torch.float64)
    normals = torch.as_tensor(vertex_normals(mesh), dtype=torch.float64)
    optim = torch.optim.Adam(field_net.parameters(), lr=cfg.step_size)

    best_state = {
        k: v.clone() for k, v in field_net.state_dict().items()
    }
    best_loss = math.inf
    aborted = False
    for it in range(cfg.iterations):
        optim.zero_grad()
        colors, disp = field_net(base)
        verts = base + disp.unsqueeze(-1) * normals
        rng = np.random.default_rng([cfg.seed, 211, it])
        poses = [
            CameraPose(
                float(rng.uniform(0.0, 360.0)),
                float(np.clip(
                    cfg.elevation_center
                    + rng.uniform(-cfg.elevation_jitter, cfg.elevation_jitter),
                    -90.0, 90.0,
                )),
                CANONICAL_DISTANCE,
            )
            for _ in range(cfg.views_per_iter)
        ]
        renders = render_color_batch(
            verts.unsqueeze(0).expand(len(poses), -1, -1),
            colors.unsqueeze(0).expand(len(poses), -1, -1),
            mesh.faces, poses, render_cfg,
        )
        loss = style_loss_t(list(renders), cfg.prompt, provider)
        value = float(loss.detach())
        if not math.isfinite(value):
            trace.warnings.append(
                f"iteration {it}: non-finite loss, reverting to best field"
            )
            aborted = True
            break
        trace.append(value, disp.detach().numpy(), colors.detach().numpy())
        if value < best_loss:
            best_loss = value
            best_state = {
                k: v.clone() for k, v in field_net.state_dict().items()
            }
        loss.backward()
        optim.step()
        if progress is not None:
            progress(it + 1, cfg.iterations)

    if aborted:
        field_net.load_state_dict(best_state)
    colors, disp = evaluate_field(field_net, mesh.vertices)
    out_verts = mesh.vertices + disp[:, None] * vertex_normals(mesh)
    styled = Mesh(out_verts, mesh.faces.copy(), np.clip(colors, 0.0, 1.0))
    return StylizeResult(styled, trace, d_max)
