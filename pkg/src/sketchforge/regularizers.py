"""Geometric smoothness regularizers with exact gradients.

Laplacian loss: mean over vertices of |v_i - mean(neighbors)|^2 with
uniform (combinatorial) weights. Flatten loss: sum over interior edges of
(1 - n1.n2)^2 where n1, n2 are the unit normals of the two faces sharing
the edge; zero for coplanar consistently-oriented faces, 4 per edge folded
back on itself. Both are translation-invariant; flatten is also
rotation-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .errors import NonManifoldError
from .mesh import Mesh

__all__ = [
    "RegularizerTensors",
    "regularizer_tensors",
    "laplacian_energy_t",
    "flatten_energy_t",
    "laplacian_loss",
    "flatten_loss",
    "laplacian_loss_grad",
    "flatten_loss_grad",
]

_EPS = 1e-12


@dataclass
class RegularizerTensors:
    """Index tensors derived from mesh topology, reusable across iterations."""

    n_vertices: int
    neighbor_src: torch.Tensor  # (sum deg,) vertex receiving the neighbor
    neighbor_dst: torch.Tensor  # (sum deg,) the neighbor itself
    degrees: torch.Tensor  # (V,)
    faces: torch.Tensor  # (F,3)
    edge_face_pairs: torch.Tensor  # (E_interior, 2)


def regularizer_tensors(mesh: Mesh) -> RegularizerTensors:
    topo = mesh.topology()
    if topo.max_edge_valence() > 2:
        raise NonManifoldError(
            f"edge shared by {topo.max_edge_valence()} faces"
        )
    degrees = torch.as_tensor(topo.vertex_degrees(), dtype=torch.long)
    if (degrees == 0).any():
        raise ValueError(
            f"vertex {int((degrees == 0).nonzero()[0])} is isolated"
        )
    src = torch.repeat_interleave(
        torch.arange(topo.n_vertices), degrees
    )
    return RegularizerTensors(
        n_vertices=topo.n_vertices,
        neighbor_src=src,
        neighbor_dst=torch.as_tensor(topo.neighbor_index, dtype=torch.long),
        degrees=degrees,
        faces=torch.as_tensor(mesh.faces, dtype=torch.long),
        edge_face_pairs=torch.as_tensor(
            topo.interior_edge_faces, dtype=torch.long
        ),
    )


def laplacian_energy_t(verts: torch.Tensor, reg: RegularizerTensors) -> torch.Tensor:
    """Differentiable uniform-Laplacian energy of (V,3) vertices."""
    nsum = torch.zeros_like(verts).index_add(
        0, reg.neighbor_src, verts[reg.neighbor_dst]
    )
    mean = nsum / reg.degrees.to(verts.dtype).unsqueeze(1)
    diff = verts - mean
    return (diff * diff).sum(dim=1).mean()


def flatten_energy_t(verts: torch.Tensor, reg: RegularizerTensors) -> torch.Tensor:
    """Differentiable dihedral flatness energy of (V,3) vertices."""
    f = reg.faces
    cross = torch.cross(
        verts[f[:, 1]] - verts[f[:, 0]],
        verts[f[:, 2]] - verts[f[:, 0]],
        dim=1,
    )
    normals = cross / cross.norm(dim=1, keepdim=True).clamp_min(_EPS)
    pairs = reg.edge_face_pairs
    if not len(pairs):
        return verts.sum() * 0.0
    cos = (normals[pairs[:, 0]] * normals[pairs[:, 1]]).sum(dim=1)
    return ((1.0 - cos) ** 2).sum()


def laplacian_energy_batch(verts: torch.Tensor, reg: RegularizerTensors) -> torch.Tensor:
    """Batched Laplacian energy: (B,V,3) -> (B,)."""
    nsum = torch.zeros_like(verts).index_add(
        1, reg.neighbor_src, verts[:, reg.neighbor_dst]
    )
    mean = nsum / reg.degrees.to(verts.dtype).reshape(1, -1, 1)
    diff = verts - mean
    return (diff * diff).sum(dim=-1).mean(dim=-1)


def flatten_energy_batch(verts: torch.Tensor, reg: RegularizerTensors) -> torch.Tensor:
    """Batched flatten energy: (B,V,3) -> (B,)."""
    f = reg.faces
    cross = torch.cross(
        verts[:, f[:, 1]] - verts[:, f[:, 0]],
        verts[:, f[:, 2]] - verts[:, f[:, 0]],
        dim=-1,
    )
    normals = cross / cross.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    pairs = reg.edge_face_pairs
    if not len(pairs):
        return verts.sum(dim=(1, 2)) * 0.0
    cos = (normals[:, pairs[:, 0]] * normals[:, pairs[:, 1]]).sum(dim=-1)
    return ((1.0 - cos) ** 2).sum(dim=-1)


def _with_grad(mesh: Mesh, energy_fn):
    reg = regularizer_tensors(mesh)
    verts = torch.as_tensor(mesh.vertices).clone().requires_grad_(True)
    value = energy_fn(verts, reg)
    (grad,) = torch.autograd.grad(value, verts)
    return float(value.detach()), grad.numpy()


def laplacian_loss(mesh: Mesh) -> float:
    reg = regularizer_tensors(mesh)
    with torch.no_grad():
        return float(laplacian_energy_t(torch.as_tensor(mesh.vertices), reg))


def flatten_loss(mesh: Mesh) -> float:
    reg = regularizer_tensors(mesh)
    with torch.no_grad():
        return float(flatten_energy_t(torch.as_tensor(mesh.vertices), reg))


def laplacian_loss_grad(mesh: Mesh):
    """(value, gradient (V,3)) of the Laplacian loss."""
    return _with_grad(mesh, laplacian_energy_t)


def flatten_loss_grad(mesh: Mesh):
    """(value, gradient (V,3)) of the flatten loss."""
    return _with_grad(mesh, flatten_energy_t)
