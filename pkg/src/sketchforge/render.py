"""Differentiable soft rasterization of triangle meshes.

Per pixel p and triangle j the coverage probability is
``D_j(p) = sigmoid(delta_j * d2(p, j) / sigma)`` where d2 is the squared
screen-space distance from the pixel center to the triangle boundary and
delta_j is +1 inside the projected triangle, -1 outside. Silhouettes
aggregate ``S(p) = 1 - prod_j (1 - D_j(p))``. Color renders softmax
barycentric-interpolated vertex colors over triangles with logits
``z_j/gamma + log D_j`` (z = normalized depth, near is large) and
alpha-composite the result over a fixed mid-grey background with the
silhouette coverage as alpha.

Pairs with ``d2/sigma`` beyond a fixed cutoff outside the triangle are
excluded by definition (their coverage is below 1.4e-11); this bounds each
face's influence to a small pixel window. Three engines share that exact
model: a scalar numba kernel (default, fastest on one core), a windowed
torch path, and a dense all-pairs torch reference. All three are exact
analytic-gradient paths (autograd, or the hand-derived kernel backward)
and agree to float rounding; tests pin that equality.

Everything is a pure function; tensors in, tensors out. Back-facing,
near-plane-clipped, and off-screen triangles are excluded.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from . import raster_kernels
from .camera import CameraPose, pose_to_view_matrix
from .mesh import Mesh

__all__ = [
    "RenderConfig",
    "SilhouetteImage",
    "render_silhouette",
    "render_silhouette_t",
    "render_silhouette_batch",
    "render_color",
    "render_color_t",
    "render_color_batch",
    "render_flat_grey",
    "render_flat_grey_t",
    "render_turntable",
    "downsample",
    "downsample_t",
    "grad_check",
    "GradCheckReport",
    "image_to_png",
    "png_to_gray",
    "BACKGROUND_GREY",
    "FLAT_GREY",
]

# fixed background for color renders; distinct from the flat-grey object
# color so shape structure survives in embeddings
BACKGROUND_GREY = 0.5
FLAT_GREY = 0.8

_EPS = 1e-12
# pairs with delta*d2/sigma <= -_CUTOFF contribute coverage < 1.4e-11 and
# are excluded by definition (all engines apply the same rule)
_CUTOFF = 25.0
_MAX_PAIR_CHUNK = 4_000_000

DEFAULT_ENGINE = "numba" if raster_kernels.HAVE_NUMBA else "windowed"


@dataclass(frozen=True)
class RenderConfig:
    width: int = 128
    height: int = 128
    sigma: float = 1e-4
    gamma: float = 1e-4
    fov_deg: float = 30.0

    def __post_init__(self):
        if self.width != self.height:
            raise ValueError("renders are square: width must equal height")
        if self.width < 2:
            raise ValueError("resolution must be at least 2")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov must be in (0,180)")

    def resized(self, size: int) -> "RenderConfig":
        return RenderConfig(size, size, self.sigma, self.gamma, self.fov_deg)


@dataclass
class SilhouetteImage:
    values: np.ndarray  # (H, W) in [0, 1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("silhouette values must be a 2-D array")
        if self.values.min() < -1e-9 or self.values.max() > 1 + 1e-9:
            raise ValueError("silhouette values must lie in [0,1]")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def _pose_matrices(poses, dtype):
    views = np.stack([pose_to_view_matrix(p) for p in poses])
    dists = np.array([p.distance for p in poses])
    return (
        torch.as_tensor(views, dtype=dtype),
        torch.as_tensor(dists, dtype=dtype),
    )


def _project(verts: torch.Tensor, poses, cfg: RenderConfig):
    """verts (B,V,3) -> ndc xy (B,V,2), camera depth (B,V) (positive in front)."""
    view, _ = _pose_matrices(poses, verts.dtype)
    rot = view[:, :3, :3]
    trans = view[:, :3, 3]
    cam = torch.einsum("bij,bvj->bvi", rot, verts) + trans[:, None, :]
    depth = -cam[..., 2]
    focal = 1.0 / math.tan(math.radians(cfg.fov_deg) / 2.0)
    xy = cam[..., :2] * focal / depth.clamp_min(_EPS)[..., None]
    return xy, depth


def _cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _signed_sq_distance(tri_xy: torch.Tensor, pix: torch.Tensor):
    """tri_xy (N,3,2), pix (N,P,2) -> signed (N,P), bary (N,P,3).

    signed = d2 inside the triangle, -d2 outside; bary are clipped,
    renormalized barycentric weights (winding assumed CCW / positive area).
    """
    d2 = None
    crosses = []
    for i in range(3):
        a = tri_xy[:, i, :].unsqueeze(1)
        b = tri_xy[:, (i + 1) % 3, :].unsqueeze(1)
        ab = b - a
        ap = pix - a
        t = (ap * ab).sum(-1) / ((ab * ab).sum(-1) + _EPS)
        t = t.clamp(0.0, 1.0)
        closest = a + t.unsqueeze(-1) * ab
        diff = pix - closest
        dist = (diff * diff).sum(-1)
        d2 = dist if d2 is None else torch.minimum(d2, dist)
        crosses.append(_cross2(ab, ap))
    cross = torch.stack(crosses, dim=-1)  # (N,P,3)
    inside = (cross >= 0).all(dim=-1)
    signed = torch.where(inside, d2, -d2)
    area2 = _cross2(
        tri_xy[:, 1, :] - tri_xy[:, 0, :], tri_xy[:, 2, :] - tri_xy[:, 0, :]
    ).unsqueeze(1)
    # cross k is taken along edge k->k+1, i.e. the weight of vertex k+2
    bary = cross.roll(1, dims=-1) / (area2.unsqueeze(-1) + _EPS)
    bary = bary.clamp(0.0, 1.0)
    bary = bary / (bary.sum(-1, keepdim=True) + _EPS)
    return signed, bary


def _margin_ndc(cfg: RenderConfig) -> float:
    return math.sqrt(_CUTOFF * cfg.sigma)


def _active_faces(xy, depth, faces_t, poses, cfg):
    """Cull back-facing / near-clipped / off-screen faces.

    Returns flattened (tri_xy (N,3,2), tri_depth (N,3), bidx (N), fidx (N)).
    """
    tri_xy = xy[:, faces_t, :]  # (B,F,3,2)
    tri_depth = depth[:, faces_t]  # (B,F,3)
    area2 = _cross2(
        tri_xy[..., 1, :] - tri_xy[..., 0, :], tri_xy[..., 2, :] - tri_xy[..., 0, :]
    )
    near = torch.tensor(
        [0.1 * p.distance for p in poses], dtype=xy.dtype
    ).unsqueeze(1)
    margin = _margin_ndc(cfg)
    mins = tri_xy.amin(dim=2)
    maxs = tri_xy.amax(dim=2)
    onscreen = (maxs > -1.0 - margin).all(-1) & (mins < 1.0 + margin).all(-1)
    keep = (area2 > _EPS) & (tri_depth.amin(-1) > near) & onscreen
    bidx, fidx = keep.nonzero(as_tuple=True)
    return tri_xy[bidx, fidx], tri_depth[bidx, fidx], bidx, fidx


def _pixel_grid(cfg: RenderConfig, dtype):
    W, H = cfg.width, cfg.height
    xs = (torch.arange(W, dtype=dtype) + 0.5) * 2.0 / W - 1.0
    ys = 1.0 - (torch.arange(H, dtype=dtype) + 0.5) * 2.0 / H
    gy, gx = torch.meshgrid(ys, xs, indexing="ij")
    return torch.stack([gx, gy], dim=-1).reshape(1, H * W, 2)


def _window_origins(tri_xy: torch.Tensor, cfg: RenderConfig):
    """Square per-face pixel windows covering every pair within the cutoff.

    Returns int64 tensors (ox (N,), oy (N,)) and the window size K.
    """
    W, H = cfg.width, cfg.height
    margin_px = _margin_ndc(cfg) * W / 2.0
    with torch.no_grad():
        px = (tri_xy[..., 0] + 1.0) * 0.5 * W - 0.5
        py = (1.0 - tri_xy[..., 1]) * 0.5 * H - 0.5
        lox = torch.ceil(px.amin(1) - margin_px - 1e-9).long()
        hix = torch.floor(px.amax(1) + margin_px + 1e-9).long()
        loy = torch.ceil(py.amin(1) - margin_px - 1e-9).long()
        hiy = torch.floor(py.amax(1) + margin_px + 1e-9).long()
        need = int(
            max(
                (hix - lox).max().item() if len(lox) else 0,
                (hiy - loy).max().item() if len(loy) else 0,
            )
            + 1
        )
        K = max(1, min(W, need))
        ox = lox.clamp(0, W - K)
        oy = loy.clamp(0, H - K)
    return ox, oy, K


def _window_pixels(ox, oy, K, cfg: RenderConfig, dtype):
    """Flat pixel indices (N,K*K) and their ndc coords (N,K*K,2)."""
    W, H = cfg.width, cfg.height
    steps = torch.arange(K)
    ix = ox[:, None, None] + steps[None, None, :]  # (N,1,K) columns
    iy = oy[:, None, None] + steps[None, :, None]  # (N,K,1) rows
    flat = (iy * W + ix).reshape(len(ox), K * K)
    xn = (ix.to(dtype) + 0.5) * 2.0 / W - 1.0
    yn = 1.0 - (iy.to(dtype) + 0.5) * 2.0 / H
    pix = torch.stack(
        [xn.expand(-1, K, K), yn.expand(-1, K, K)], dim=-1
    ).reshape(len(ox), K * K, 2)
    return flat, pix


class _NumbaSilhouette(torch.autograd.Function):
    """Scatter soft coverage of N projected triangles into B images."""

    @staticmethod
    def forward(ctx, tri_xy, base, ox, oy, K, B, cfg):
        tri_np = tri_xy.detach().numpy()
        log_acc = np.zeros(B * cfg.height * cfg.width, dtype=np.float64)
        raster_kernels.silhouette_forward(
            tri_np, base, ox, oy, K, cfg.width, cfg.height,
            cfg.sigma, _CUTOFF, log_acc,
        )
        ctx.save_for_backward(tri_xy)
        ctx.meta = (base, ox, oy, K, cfg, log_acc)
        return 1.0 - torch.exp(torch.from_numpy(log_acc)).reshape(
            B, cfg.height, cfg.width
        )

    @staticmethod
    def backward(ctx, grad_out):
        (tri_xy,) = ctx.saved_tensors
        base, ox, oy, K, cfg, log_acc = ctx.meta
        grad_tri = np.zeros_like(tri_xy.detach().numpy())
        raster_kernels.silhouette_backward(
            tri_xy.detach().numpy(), base, ox, oy, K, cfg.width, cfg.height,
            cfg.sigma, _CUTOFF, log_acc,
            grad_out.contiguous().reshape(-1).numpy().astype(np.float64),
            grad_tri,
        )
        return torch.from_numpy(grad_tri), None, None, None, None, None, None


def render_silhouette_batch(
    verts: torch.Tensor, faces: np.ndarray, poses, cfg: RenderConfig,
    engine: str | None = None,
) -> torch.Tensor:
    """Soft silhouettes for B meshes of shared topology: (B,V,3) -> (B,H,W)."""
    engine = engine or DEFAULT_ENGINE
    B = verts.shape[0]
    H, W = cfg.height, cfg.width
    dtype = verts.dtype
    if len(faces) == 0:
        return torch.zeros(B, H, W, dtype=dtype)
    faces_t = torch.as_tensor(faces, dtype=torch.long)
    xy, depth = _project(verts, poses, cfg)
    tri_xy, _, bidx, _ = _active_faces(xy, depth, faces_t, poses, cfg)
    if not len(tri_xy):
        return torch.zeros(B, H, W, dtype=dtype)

    if engine == "numba":
        ox, oy, K = _window_origins(tri_xy, cfg)
        base = (bidx * (H * W)).numpy()
        out = _NumbaSilhouette.apply(
            tri_xy.double(), base, ox.numpy(), oy.numpy(), K, B, cfg
        )
        return out.to(dtype)

    log_acc = torch.zeros(B * H * W, dtype=dtype)
    if engine == "windowed":
        ox, oy, K = _window_origins(tri_xy, cfg)
        flat, pix = _window_pixels(ox, oy, K, cfg, dtype)
        chunk = max(1, _MAX_PAIR_CHUNK // max(K * K, 1))
        for s in range(0, len(tri_xy), chunk):
            e = min(s + chunk, len(tri_xy))
            signed, _ = _signed_sq_distance(tri_xy[s:e], pix[s:e])
            scaled = signed / cfg.sigma
            log_terms = torch.where(
                scaled > -_CUTOFF, -F.softplus(scaled), 0.0
            )
            g = (bidx[s:e, None] * (H * W) + flat[s:e]).reshape(-1)
            log_acc = log_acc.index_add(0, g, log_terms.reshape(-1))
    elif engine == "dense":
        pix = _pixel_grid(cfg, dtype).expand(len(tri_xy), -1, -1)
        signed, _ = _signed_sq_distance(tri_xy, pix)
        scaled = signed / cfg.sigma
        log_terms = torch.where(scaled > -_CUTOFF, -F.softplus(scaled), 0.0)
        gidx = (
            bidx[:, None] * (H * W) + torch.arange(H * W)[None, :]
        ).reshape(-1)
        log_acc = log_acc.index_add(0, gidx, log_terms.reshape(-1))
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return 1.0 - torch.exp(log_acc).reshape(B, H, W)


def render_color_batch(
    verts: torch.Tensor, colors: torch.Tensor, faces: np.ndarray, poses,
    cfg: RenderConfig, engine: str = "windowed",
) -> torch.Tensor:
    """Color renders for B meshes of shared topology -> (B,H,W,3) in [0,1].

    Foreground color is a depth/coverage softmax over in-cutoff triangle
    pairs, alpha-composited over the background via silhouette coverage.
    """
    B = verts.shape[0]
    H, W = cfg.height, cfg.width
    dtype = verts.dtype
    bg = torch.full((3,), BACKGROUND_GREY, dtype=dtype)
    if len(faces) == 0:
        return bg.view(1, 1, 1, 3).expand(B, H, W, 3).clone()
    faces_t = torch.as_tensor(faces, dtype=torch.long)
    xy, depth = _project(verts, poses, cfg)
    tri_xy, tri_depth, bidx, fidx = _active_faces(xy, depth, faces_t, poses, cfg)
    if not len(tri_xy):
        return bg.view(1, 1, 1, 3).expand(B, H, W, 3).clone()
    if colors.dim() == 2:
        colors = colors.unsqueeze(0).expand(B, -1, -1)
    tri_col = colors[:, faces_t, :][bidx, fidx]  # (N,3,3)

    if engine == "windowed" or engine == "numba":
        ox, oy, K = _window_origins(tri_xy, cfg)
        flat, pix = _window_pixels(ox, oy, K, cfg, dtype)
        gidx = (bidx[:, None] * (H * W) + flat).reshape(-1)
    elif engine == "dense":
        P = H * W
        pix = _pixel_grid(cfg, dtype).expand(len(tri_xy), -1, -1)
        gidx = (bidx[:, None] * P + torch.arange(P)[None, :]).reshape(-1)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    signed, bary = _signed_sq_distance(tri_xy, pix)
    scaled = signed / cfg.sigma
    valid = scaled > -_CUTOFF
    log_d = -F.softplus(-scaled)  # log sigmoid(signed/sigma)
    pix_depth = (bary * tri_depth.unsqueeze(1)).sum(-1)
    dists = torch.tensor([p.distance for p in poses], dtype=dtype)
    near = 0.1 * dists[bidx].unsqueeze(1)
    far = 2.5 * dists[bidx].unsqueeze(1)
    z_norm = (far - pix_depth) / (far - near)
    logits = z_norm / cfg.gamma + log_d

    # coverage alpha shares the pair terms with the silhouette model
    log_terms = torch.where(valid, -F.softplus(scaled), 0.0)
    alpha_log = torch.zeros(B * H * W, dtype=dtype).index_add(
        0, gidx, log_terms.reshape(-1)
    )
    alpha = 1.0 - torch.exp(alpha_log)

    # per-pixel max shift over valid pairs for a stable triangle softmax;
    # invalid pairs are pushed to -inf BEFORE the exp (their logits can
    # overflow exp, and an overflow in the unselected where-branch would
    # poison the backward pass with 0 * inf)
    neg_inf = torch.tensor(-math.inf, dtype=dtype)
    m = torch.zeros(B * H * W, dtype=dtype)
    masked = torch.where(valid, logits.detach(), neg_inf)
    m = m.index_reduce(0, gidx, masked.reshape(-1), "amax", include_self=False)
    m = torch.nan_to_num(m, neginf=0.0, posinf=0.0)
    e = torch.exp(
        torch.where(valid, logits, neg_inf) - m[gidx].reshape(logits.shape)
    )
    denom = torch.zeros(B * H * W, dtype=dtype).index_add(0, gidx, e.reshape(-1))
    pix_col = (bary.unsqueeze(-1) * tri_col.unsqueeze(1)).sum(-2)  # (N,P,3)
    num = torch.zeros(B * H * W, 3, dtype=dtype).index_add(
        0, gidx, (e.unsqueeze(-1) * pix_col).reshape(-1, 3)
    )
    fg = num / denom.clamp_min(_EPS)[:, None]
    out = alpha[:, None] * fg + (1.0 - alpha[:, None]) * bg
    return out.reshape(B, H, W, 3)


def render_silhouette_t(
    verts: torch.Tensor, faces: np.ndarray, pose: CameraPose, cfg: RenderConfig,
    engine: str | None = None,
) -> torch.Tensor:
    """Single-mesh silhouette (V,3) -> (H,W); differentiable w.r.t. verts."""
    return render_silhouette_batch(
        verts.unsqueeze(0), faces, [pose], cfg, engine
    )[0]


def render_color_t(
    verts: torch.Tensor, colors: torch.Tensor, faces: np.ndarray,
    pose: CameraPose, cfg: RenderConfig, engine: str = "windowed",
) -> torch.Tensor:
    """Single-mesh color render -> (H,W,3); differentiable in verts & colors."""
    return render_color_batch(
        verts.unsqueeze(0), colors.unsqueeze(0), faces, [pose], cfg, engine
    )[0]


def render_flat_grey_t(
    verts: torch.Tensor, faces: np.ndarray, pose: CameraPose, cfg: RenderConfig,
    engine: str | None = None,
) -> torch.Tensor:
    """Uniform flat-grey color render as (H,W,3).

    With all vertex colors equal the triangle softmax is constant, so the
    color render reduces exactly to an affine map of the silhouette; this
    shortcut is pinned against render_color by tests.
    """
    sil = render_silhouette_t(verts, faces, pose, cfg, engine)
    img = BACKGROUND_GREY + (FLAT_GREY - BACKGROUND_GREY) * sil
    return img.unsqueeze(-1).expand(*sil.shape, 3)


def render_silhouette(mesh: Mesh, pose: CameraPose, cfg: RenderConfig) -> SilhouetteImage:
    with torch.no_grad():
        img = render_silhouette_t(
            torch.as_tensor(mesh.vertices), mesh.faces, pose, cfg
        )
    return SilhouetteImage(img.numpy())


def render_color(mesh: Mesh, pose: CameraPose, cfg: RenderConfig) -> np.ndarray:
    """(H,W,3) color render; mesh must carry vertex colors."""
    if mesh.colors is None:
        raise ValueError("mesh has no vertex colors")
    with torch.no_grad():
        img = render_color_t(
            torch.as_tensor(mesh.vertices),
            torch.as_tensor(mesh.colors),
            mesh.faces, pose, cfg,
        )
    return img.numpy()


def render_flat_grey(mesh: Mesh, pose: CameraPose, cfg: RenderConfig) -> np.ndarray:
    """Color render with the uniform flat-grey object color."""
    with torch.no_grad():
        img = render_flat_grey_t(
            torch.as_tensor(mesh.vertices), mesh.faces, pose, cfg
        )
    return img.numpy()


def render_turntable(
    mesh: Mesh, cfg: RenderConfig, n_views: int = 8, elevation_deg: float = 15.0
) -> np.ndarray:
    """Horizontal strip of color renders orbiting the mesh, (H, n*W, 3)."""
    views = []
    for i in range(n_views):
        pose = CameraPose(360.0 * i / n_views, elevation_deg)
        if mesh.colors is not None:
            views.append(render_color(mesh, pose, cfg))
        else:
            views.append(render_flat_grey(mesh, pose, cfg))
    return np.concatenate(views, axis=1)


def downsample_t(img: torch.Tensor, factor: int) -> torch.Tensor:
    """Box-filter average by a power-of-two factor; keeps values in [0,1]."""
    if factor < 1 or (factor & (factor - 1)) != 0:
        raise ValueError(f"factor must be a positive power of 2, got {factor}")
    if factor == 1:
        return img
    *lead, h, w = img.shape
    if h % factor or w % factor:
        raise ValueError(f"factor {factor} does not divide {h}x{w}")
    x = img.reshape(*lead, h // factor, factor, w // factor, factor)
    return x.mean(dim=(-3, -1))


def downsample(img: SilhouetteImage, factor: int) -> SilhouetteImage:
    out = downsample_t(torch.as_tensor(img.values), factor)
    return SilhouetteImage(out.numpy())


@dataclass
class GradCheckReport:
    max_rel_err: float
    fraction_passing: float
    n_checked: int
    rel_tol: float

    @property
    def passed(self) -> bool:
        return self.fraction_passing >= 0.99


def grad_check(
    loss_fn, mesh: Mesh, pose: CameraPose, cfg: RenderConfig,
    rel_tol: float = 1e-2,
) -> GradCheckReport:
    """Compare autograd gradients of loss_fn(verts, pose, cfg) against
    central finite differences with h = 1e-4 * bounding radius.

    Coordinates with |analytic| <= 1e-6 are skipped; relative error is
    |a - f| / max(|a|, |f|).
    """
    if not cfg.sigma > 0:
        raise ValueError("degenerate config: sigma must be positive")
    verts = torch.as_tensor(mesh.vertices, dtype=torch.float64).clone()
    verts.requires_grad_(True)
    loss = loss_fn(verts, pose, cfg)
    (analytic,) = torch.autograd.grad(loss, verts)
    analytic = analytic.detach().numpy()

    h = 1e-4 * max(mesh.bounding_radius(), 1e-9)
    base = verts.detach().clone()
    rel_errs = []
    with torch.no_grad():
        for idx in np.ndindex(*base.shape):
            a = analytic[idx]
            if abs(a) <= 1e-6:
                continue
            pert = base.clone()
            pert[idx] += h
            lp = float(loss_fn(pert, pose, cfg))
            pert[idx] -= 2 * h
            lm = float(loss_fn(pert, pose, cfg))
            fd = (lp - lm) / (2 * h)
            rel_errs.append(abs(a - fd) / max(abs(a), abs(fd), 1e-300))
    if not rel_errs:
        return GradCheckReport(0.0, 1.0, 0, rel_tol)
    rel_errs = np.array(rel_errs)
    return GradCheckReport(
        max_rel_err=float(rel_errs.max()),
        fraction_passing=float((rel_errs < rel_tol).mean()),
        n_checked=len(rel_errs),
        rel_tol=rel_tol,
    )


def image_to_png(arr: np.ndarray) -> bytes:
    """uint8-quantize a [0,1] float image ((H,W) or (H,W,3)) to PNG bytes."""
    a = np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0)
    data = np.round(a * 255.0).astype(np.uint8)
    img = Image.fromarray(data, mode="L" if data.ndim == 2 else "RGB")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def png_to_gray(data: bytes) -> np.ndarray:
    """Decode PNG bytes to a luminance image in [0,1]."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except Exception as exc:
        raise ValueError(f"could not decode PNG: {exc}") from None
    arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr @ np.array([0.299, 0.587, 0.114])
