"""Sketch ingest: stroke-convention PNG to filled silhouette occupancy.

Input convention (stroke pixels = 0, background = 1): pixels darker than
the threshold are strokes. Strokes are converted to filled occupancy by
flood-filling the background from the image border; everything not
reachable from the border (strokes plus enclosed regions) counts as
inside. Ingesting an already-filled silhouette is therefore idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .render import png_to_gray

__all__ = ["Sketch", "ingest_sketch", "sketch_from_mask"]


@dataclass
class Sketch:
    values: np.ndarray  # (H,W) occupancy, 1.0 = inside

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("sketch values must be 2-D")
        uniq = np.unique(self.values)
        if not np.isin(uniq, (0.0, 1.0)).all():
            raise ValueError("sketch occupancy must be binary")
        if not self.values.any():
            raise ValueError("sketch has no occupied pixels")

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def sketch_from_mask(mask: np.ndarray) -> Sketch:
    """Wrap an already-filled binary occupancy array (1 = inside)."""
    return Sketch(np.asarray(mask, dtype=np.float64))


def ingest_sketch(png_bytes: bytes, threshold: float = 0.5) -> Sketch:
    """Threshold a PNG, fill closed stroke contours, return occupancy."""
    gray = png_to_gray(png_bytes)
    stroke = gray < threshold
    if not stroke.any():
        raise ValueError("sketch rejected: no stroke pixels after thresholding")
    background = ~stroke
    labels, _ = ndimage.label(
        background, structure=ndimage.generate_binary_structure(2, 1)
    )
    border_labels = np.unique(
        np.concatenate(
            [labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]]
        )
    )
    border_labels = border_labels[border_labels != 0]
    outside = np.isin(labels, border_labels)
    if outside.sum() > 0.98 * gray.size:
        raise ValueError(
            "sketch rejected: outer contour is not closed "
            f"(background flood covers {outside.mean():.1%} of the image)"
        )
    occupancy = (~outside).astype(np.float64)
    return Sketch(occupancy)
