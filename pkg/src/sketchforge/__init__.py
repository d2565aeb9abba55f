"""sketchforge: single-sketch + text prompt to colored 3D mesh.

A template icosphere is deformed to match a binary sketch under a
multi-scale silhouette IoU loss, regularizers, and a joint text/image
embedding loss, all rendered through a differentiable soft rasterizer.
A per-object neural style field then adds vertex colors and normal
displacements driven by a second text prompt.
"""

__version__ = "0.1.0"

from .mesh import Mesh, make_icosphere, vertex_normals, displace_along_normals
from .camera import CameraPose, canonical_pose, sample_poses
from .render import RenderConfig, render_silhouette, render_color

__all__ = [
    "Mesh",
    "make_icosphere",
    "vertex_normals",
    "displace_along_normals",
    "CameraPose",
    "canonical_pose",
    "sample_poses",
    "RenderConfig",
    "render_silhouette",
    "render_color",
    "__version__",
]
