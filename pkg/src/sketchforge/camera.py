"""Orbit camera: azimuth/elevation on a sphere around the origin, y up.

Azimuth 0 / elevation 0 places the camera on the +z axis looking at the
origin (the canonical view). Azimuth rotates about +y, elevation lifts
toward +y. Distance is fixed per pose; the canonical distance makes the
unit sphere span ~70% of the frame at the default 30 degree fov.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "CameraPose",
    "CANONICAL_DISTANCE",
    "canonical_pose",
    "camera_position",
    "pose_to_view_matrix",
    "sample_poses",
    "wrap_azimuth_delta",
]

CANONICAL_DISTANCE = 5.5

# pose distribution used for multi-view sampling and dataset poses
ELEVATION_RANGE = (-20.0, 40.0)


@dataclass(frozen=True)
class CameraPose:
    azimuth_deg: float
    elevation_deg: float
    distance: float = CANONICAL_DISTANCE

    def __post_init__(self):
        object.__setattr__(
            self, "azimuth_deg", float(self.azimuth_deg) % 360.0
        )
        if not -90.0 <= self.elevation_deg <= 90.0:
            raise ValueError(
                f"elevation must be in [-90,90], got {self.elevation_deg}"
            )
        if not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")


def canonical_pose(distance: float = CANONICAL_DISTANCE) -> CameraPose:
    return CameraPose(0.0, 0.0, distance)


def camera_position(pose: CameraPose) -> np.ndarray:
    az = math.radians(pose.azimuth_deg)
    el = math.radians(pose.elevation_deg)
    return pose.distance * np.array(
        [math.sin(az) * math.cos(el), math.sin(el), math.cos(az) * math.cos(el)]
    )


def pose_to_view_matrix(pose: CameraPose) -> np.ndarray:
    """4x4 world-to-camera transform; the camera looks down its -z axis."""
    eye = camera_position(pose)
    forward = -eye / np.linalg.norm(eye)
    up = np.array([0.0, 1.0, 0.0])
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        # looking straight along +-y: fall back to the azimuth tangent
        az = math.radians(pose.azimuth_deg)
        up = np.array([-math.sin(az), 0.0, -math.cos(az)]) * math.copysign(
            1.0, pose.elevation_deg
        )
        right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    cam_up = np.cross(right, forward)
    view = np.eye(4)
    view[0, :3] = right
    view[1, :3] = cam_up
    view[2, :3] = -forward
    view[:3, 3] = -view[:3, :3] @ eye
    return view


def sample_poses(n: int, rng_seed: int, distance: float = CANONICAL_DISTANCE):
    """Draw n poses: azimuth ~ U[0,360), elevation ~ U[-20,40], fixed distance."""
    if n < 1:
        raise ValueError(f"need at least one pose, got {n}")
    rng = np.random.default_rng(rng_seed)
    azimuths = rng.uniform(0.0, 360.0, size=n)
    lo, hi = ELEVATION_RANGE
    elevations = rng.uniform(lo, hi, size=n)
    return [
        CameraPose(float(a), float(e), distance)
        for a, e in zip(azimuths, elevations)
    ]


def wrap_azimuth_delta(delta_deg) -> np.ndarray:
    """Wrap azimuth differences into (-180, 180]."""
    return -(np.mod(-np.asarray(delta_deg, dtype=np.float64) + 180.0, 360.0) - 180.0)
