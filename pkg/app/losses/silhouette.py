"""
Occlusion-aware silhouette loss and the offscreen penalty.
"""

import logging
from typing import Optional

import torch
import torch.nn.functional as F

from ..config.settings import settings
from ..errors import DimensionMismatchError
from ..geometry.camera import Camera
from ..geometry.transforms import DTYPE, as_tensor
from ..raster.masks import as_grid, distance_transform, edge_map

logger = logging.getLogger(__name__)


def edge_distance_field(mask) -> Optional[torch.Tensor]:
    """Distance to the nearest pixel of E(M); None when E(M) is empty."""
    edges = edge_map(mask)
    if not bool((edges > 0.5).any()):
        return None
    return torch.as_tensor(distance_transform(edges), dtype=DTYPE)


def chamfer_term(silhouette: torch.Tensor, edge_dt: Optional[torch.Tensor]) -> torch.Tensor:
    """Sum of E(M) distances over edge pixels of the binarized render, per pixel."""
    if edge_dt is None:
        return torch.zeros((), dtype=DTYPE)
    hard = (silhouette.detach() >= 0.5).to(DTYPE)
    edges = edge_map(hard)
    return (edges * edge_dt).sum() / edges.numel()


def occ_sil_loss(
    silhouette: torch.Tensor,
    mask,
    indicator,
    chamfer: bool = False,
    edge_dt: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """Mean of (I * S - M)^2 plus, optionally, the one-way chamfer term.

    ``edge_dt`` is the precomputed distance field of E(M); computed on the fly
    when omitted.
    """
    target = as_grid(mask)
    keep = as_grid(indicator)
    if silhouette.shape != target.shape or keep.shape != target.shape:
        raise DimensionMismatchError(
            f"silhouette {tuple(silhouette.shape)}, mask {tuple(target.shape)}, "
            f"indicator {tuple(keep.shape)} differ"
        )
    loss = ((keep * silhouette - target) ** 2).sum() / target.numel()
    if chamfer:
        if edge_dt is None:
            edge_dt = edge_distance_field(target)
        loss = loss + chamfer_term(keep * silhouette, edge_dt)
    return loss


def offscreen_penalty(vertices: torch.Tensor, cam: Camera, near_plane: Optional[float] = None) -> torch.Tensor:
    """Mean squared hinge on NDC coordinates leaving the image and on z before the near plane."""
    near = settings.near_plane if near_plane is None else near_plane
    vertices = as_tensor(vertices)
    if vertices.shape[0] == 0:
        return torch.zeros((), dtype=DTYPE)
    z = vertices[:, 2]
    safe_z = z.clamp(min=near)
    u = cam.f * vertices[:, 0] / safe_z
    v = cam.f * vertices[:, 1] / safe_z
    extent_u, extent_v = cam.ndc_extent
    penalty = (
        F.relu(u.abs() - extent_u) ** 2
        + F.relu(v.abs() - extent_v) ** 2
        + F.relu(near - z) ** 2
    )
    return penalty.mean()
