"""Joint vision/language embedding providers.

The contract: unit-norm vectors of a fixed dimension, deterministic per
provider, comparable by cosine similarity. Two implementations:

* ToyEmbeddingProvider - a deterministic desk-scale stand-in. Images are
  box-downsampled 8x8 and 4x4 grayscale intensities plus weighted global
  color means, pushed through a fixed seeded random projection to D=64
  and normalized (differentiable everywhere). Text averages per-token
  vectors from a built-in table: category words are anchored to the
  embedding of a canonical flat-grey render of their procedural exemplar
  (calibrated at table build so cosine(word, exemplar render) >= 0.3),
  color words to the embedding of a solid-color image, and unknown tokens
  fall back to a hashed unit vector.

* RemoteEmbeddingProvider - JSON-over-HTTP client for an external model
  (text and image endpoints, base64 PNG payloads). No image gradients;
  optimization falls back to the toy provider, remote scores are for
  evaluation.
"""

from __future__ import annotations

import base64
import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import torch
import torch.nn.functional as F

from .errors import TransportError

__all__ = [
    "EmbeddingVector",
    "ToyEmbeddingProvider",
    "RemoteEmbeddingProvider",
    "toy_provider",
    "remote_provider",
    "cosine",
]

TOY_DIMENSION = 64
_TOY_SEED = 1405
_FEATURE_DIM = 8 * 8 + 4 * 4 + 3
_MEANS_WEIGHT = 8.0
# share of the anchor direction vs the hashed word direction in the mix
_ALPHA_CATEGORY = 0.9
_ALPHA_COLOR = 0.95
# category anchors subtract this share of the mean exemplar-render
# embedding; flat-grey renders share most of their embedding (background
# plus grey means), and without the subtraction shape words could not
# discriminate shapes at all
_BETA_COMMON = 0.95
_DISC_RADIUS = 0.3
_CALIBRATION_MIN_COSINE = 0.3
_LUMA = (0.299, 0.587, 0.114)

# the ten basic color words the toy table anchors to solid-color images
COLOR_WORDS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 0.8, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "orange": (1.0, 0.55, 0.0),
    "purple": (0.55, 0.0, 0.8),
    "brown": (0.55, 0.35, 0.15),
    "black": (0.0, 0.0, 0.0),
    "white": (1.0, 1.0, 1.0),
    "grey": (0.5, 0.5, 0.5),
}
_WORD_ALIASES = {"gray": "grey"}


@dataclass
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        norm = float(np.linalg.norm(self.values))
        if abs(norm - 1.0) > 1e-5:
            raise ValueError(f"embedding must be unit-norm, |v| = {norm:.8f}")

    @property
    def dimension(self) -> int:
        return len(self.values)


def cosine(a, b) -> float:
    va = np.asarray(getattr(a, "values", a), dtype=np.float64)
    vb = np.asarray(getattr(b, "values", b), dtype=np.float64)
    return float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))


def _hash_unit_vector(token: str) -> np.ndarray:
    digest = hashlib.sha256(f"toy-token:{token}".encode()).digest()
    seed = int.from_bytes(digest[:8], "little")
    v = np.random.default_rng(seed).standard_normal(TOY_DIMENSION)
    return v / np.linalg.norm(v)


def _tokenize(prompt: str) -> list[str]:
    tokens = re.findall(r"[a-z]+", prompt.lower())
    return [_WORD_ALIASES.get(t, t) for t in tokens]


class ToyEmbeddingProvider:
    """Deterministic desk-scale joint embedding (no ML runtime)."""

    dimension = TOY_DIMENSION
    supports_image_gradient = True

    def __init__(self):
        rng = np.random.default_rng(_TOY_SEED)
        proj = rng.standard_normal((_FEATURE_DIM, TOY_DIMENSION))
        proj /= np.sqrt(_FEATURE_DIM)
        self._projection = torch.as_tensor(proj, dtype=torch.float64)
        self._table: dict[str, np.ndarray] | None = None
        self._prompt_cache: dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()

    # --- image path -----------------------------------------------------

    def _features_t(self, img: torch.Tensor) -> torch.Tensor:
        if img.dim() == 2:
            img = img.unsqueeze(-1).expand(*img.shape, 3)
        if img.dim() != 3 or img.shape[-1] != 3:
            raise ValueError("image must be (H,W) or (H,W,3)")
        h, w = img.shape[0], img.shape[1]
        if h != w or h < 16:
            raise ValueError(
                f"toy provider needs a square image of size >= 16, got {h}x{w}"
            )
        luma = torch.as_tensor(_LUMA, dtype=img.dtype)
        gray = (img * luma).sum(-1)
        g = gray.unsqueeze(0).unsqueeze(0)
        f8 = F.adaptive_avg_pool2d(g, 8).reshape(-1)
        f4 = F.adaptive_avg_pool2d(g, 4).reshape(-1)
        means = img.reshape(-1, 3).mean(dim=0) * _MEANS_WEIGHT
        return torch.cat([f8, f4, means])

    def embed_image_t(self, img: torch.Tensor) -> torch.Tensor:
        """Differentiable embedding of an (H,W) or (H,W,3) tensor in [0,1]."""
        feat = self._features_t(img).to(torch.float64)
        vec = feat @ self._projection
        norm = vec.norm()
        if float(norm.detach()) < 1e-9:
            # an all-zero image has no feature direction; map it to a
            # fixed unit vector so the result is still well-defined
            return torch.as_tensor(_hash_unit_vector("all-zero image"))
        return vec / norm

    def embed_images_t(self, imgs: torch.Tensor) -> torch.Tensor:
        """Batched variant: (B,H,W) or (B,H,W,3) -> (B,D), differentiable."""
        if imgs.dim() == 3:
            imgs = imgs.unsqueeze(-1).expand(*imgs.shape, 3)
        h, w = imgs.shape[1], imgs.shape[2]
        if h != w or h < 16:
            raise ValueError(
                f"toy provider needs square images of size >= 16, got {h}x{w}"
            )
        luma = torch.as_tensor(_LUMA, dtype=imgs.dtype)
        gray = (imgs * luma).sum(-1).unsqueeze(1)  # (B,1,H,W)
        f8 = F.adaptive_avg_pool2d(gray, 8).reshape(len(imgs), -1)
        f4 = F.adaptive_avg_pool2d(gray, 4).reshape(len(imgs), -1)
        means = imgs.reshape(len(imgs), -1, 3).mean(dim=1) * _MEANS_WEIGHT
        feat = torch.cat([f8, f4, means], dim=1).to(torch.float64)
        vec = feat @ self._projection
        return vec / vec.norm(dim=-1, keepdim=True).clamp_min(1e-12)

    def embed_image(self, img: np.ndarray) -> EmbeddingVector:
        with torch.no_grad():
            vec = self.embed_image_t(torch.as_tensor(img, dtype=torch.float64))
        return EmbeddingVector(vec.numpy())

    # --- text path ------------------------------------------------------

    def _build_table(self) -> dict[str, np.ndarray]:
        # imports deferred: the calibration renders procedural exemplars
        from .camera import canonical_pose
        from .procgen import EXEMPLAR_CATEGORY, exemplar_mesh
        from .render import BACKGROUND_GREY, RenderConfig, render_flat_grey

        cfg = RenderConfig(64, 64)
        pose = canonical_pose()
        # category words: anchor at the exemplar render embedding with the
        # common component of all exemplar renders removed (amplifies the
        # shape-specific direction), then mix in the hashed word vector
        render_embeds = {
            word: self.embed_image(
                render_flat_grey(exemplar_mesh(word), pose, cfg)
            ).values
            for word in sorted(EXEMPLAR_CATEGORY)
        }
        common = np.mean(list(render_embeds.values()), axis=0)
        table: dict[str, np.ndarray] = {}
        for word, embed in render_embeds.items():
            delta = embed - _BETA_COMMON * common
            delta /= np.linalg.norm(delta)
            mixed = _ALPHA_CATEGORY * delta + (1 - _ALPHA_CATEGORY) * (
                _hash_unit_vector(word)
            )
            vec = mixed / np.linalg.norm(mixed)
            if cosine(vec, embed) < _CALIBRATION_MIN_COSINE:
                raise RuntimeError(
                    f"toy table calibration failed for {word!r}: "
                    f"cosine {cosine(vec, embed):.3f}"
                )
            table[word] = vec
        # color words: anchor at the embedding of a colored disc over the
        # render background, the reachable optimum of a colorized render
        yy, xx = np.mgrid[0:64, 0:64]
        c = (64 - 1) / 2.0
        disc = ((xx - c) ** 2 + (yy - c) ** 2) <= (_DISC_RADIUS * 64) ** 2
        for word, rgb in COLOR_WORDS.items():
            img = np.full((64, 64, 3), BACKGROUND_GREY)
            img[disc] = rgb
            anchor = self.embed_image(img).values
            mixed = _ALPHA_COLOR * anchor + (1 - _ALPHA_COLOR) * (
                _hash_unit_vector(word)
            )
            table[word] = mixed / np.linalg.norm(mixed)
        return table

    def _token_vector(self, token: str) -> np.ndarray:
        if self._table is None:
            with self._lock:
                if self._table is None:
                    self._table = self._build_table()
        vec = self._table.get(token)
        return vec if vec is not None else _hash_unit_vector(token)

    def embed_text(self, prompt: str) -> EmbeddingVector:
        tokens = _tokenize(prompt)
        if not tokens:
            raise ValueError("prompt has no tokens")
        key = " ".join(tokens)
        cached = self._prompt_cache.get(key)
        if cached is not None:
            return cached
        mean = np.mean([self._token_vector(t) for t in tokens], axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            raise ValueError(f"prompt {prompt!r} embeds to a zero vector")
        out = EmbeddingVector(mean / norm)
        with self._lock:
            self._prompt_cache[key] = out
        return out


@lru_cache(maxsize=1)
def toy_provider() -> ToyEmbeddingProvider:
    return ToyEmbeddingProvider()


def _timeout_seconds() -> float:
    ms = os.environ.get("SKETCHFORGE_EMBED_TIMEOUT_MS", "10000")
    try:
        return max(0.001, float(ms) / 1000.0)
    except ValueError:
        return 10.0


class RemoteEmbeddingProvider:
    """HTTP client for an external embedding service.

    Protocol: POST {endpoint}/embed/text with {"text": ...} and
    POST {endpoint}/embed/image with {"png_base64": ...}, both answering
    {"dim": D, "values": [...]}. Non-unit vectors are renormalized
    client-side. At most `max_in_flight` concurrent requests.
    """

    supports_image_gradient = False

    def __init__(self, endpoint: str, max_in_flight: int = 4):
        self.endpoint = endpoint.rstrip("/")
        self._semaphore = threading.Semaphore(max_in_flight)
        self._dimension: int | None = None

    @property
    def dimension(self) -> int:
        if self._dimension is None:
            self.embed_text("dimension probe")
        return self._dimension

    def _post(self, path: str, payload: dict) -> np.ndarray:
        import requests

        url = f"{self.endpoint}{path}"
        try:
            with self._semaphore:
                resp = requests.post(
                    url, json=payload, timeout=_timeout_seconds()
                )
        except requests.RequestException as exc:
            raise TransportError(f"POST {url} failed: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(
                f"POST {url} returned {resp.status_code}: {resp.text[:200]}"
            )
        try:
            body = resp.json()
            values = np.asarray(body["values"], dtype=np.float64)
            dim = int(body["dim"])
        except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
            raise TransportError(f"malformed response from {url}: {exc}") from exc
        if values.ndim != 1 or len(values) != dim:
            raise TransportError(
                f"response dim {dim} does not match {values.shape}"
            )
        norm = np.linalg.norm(values)
        if norm < 1e-12:
            raise TransportError(f"zero embedding vector from {url}")
        if self._dimension is None:
            self._dimension = dim
        elif dim != self._dimension:
            raise TransportError(
                f"dimension changed from {self._dimension} to {dim}"
            )
        return values / norm

    def embed_text(self, prompt: str) -> EmbeddingVector:
        if not prompt.strip():
            raise ValueError("prompt must be non-empty")
        return EmbeddingVector(self._post("/embed/text", {"text": prompt}))

    def embed_image(self, img: np.ndarray) -> EmbeddingVector:
        from .render import image_to_png

        png = image_to_png(np.asarray(img, dtype=np.float64))
        payload = {"png_base64": base64.b64encode(png).decode("ascii")}
        return EmbeddingVector(self._post("/embed/image", payload))

    def embed_image_t(self, img: torch.Tensor) -> torch.Tensor:
        raise RuntimeError(
            "remote provider does not serve image gradients; "
            "optimize with the toy provider instead"
        )


def remote_provider(endpoint: str, max_in_flight: int = 4) -> RemoteEmbeddingProvider:
    return RemoteEmbeddingProvider(endpoint, max_in_flight)
