"""
Binary mask operations: edge maps, distance transforms, occlusion indicators
and resampling to the working resolution.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np
import torch
import torch.nn.functional as F
from scipy.ndimage import distance_transform_edt

from ..config.settings import settings
from ..errors import DimensionMismatchError, InvalidParameterError
from ..geometry.transforms import DTYPE

logger = logging.getLogger(__name__)

Grid = Union[np.ndarray, torch.Tensor]


def as_grid(mask) -> torch.Tensor:
    """(H, W) float64 tensor from a Mask, array or tensor."""
    data = getattr(mask, "data", mask)
    if isinstance(data, torch.Tensor):
        return data.to(DTYPE)
    return torch.as_tensor(np.asarray(data, dtype=np.float64))


def edge_map(mask, filter_size: Optional[int] = None) -> torch.Tensor:
    """MaxPool(M) - M: the exterior band around the foreground."""
    size = settings.edge_filter_size if filter_size is None else filter_size
    grid = as_grid(mask)
    pooled = F.max_pool2d(grid[None, None], kernel_size=size, stride=1, padding=size // 2)[0, 0]
    return pooled - grid


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance from every pixel to the nearest foreground pixel."""
    grid = as_grid(mask).detach().numpy() > 0.5
    if not grid.any():
        raise InvalidParameterError("distance transform of an empty mask")
    return distance_transform_edt(~grid)


def occlusion_indicator(target: int, masks: Sequence) -> torch.Tensor:
    """1 everywhere except pixels covered only by masks of other instances."""
    grids = [as_grid(m) > 0.5 for m in masks]
    if not 0 <= target < len(grids):
        raise InvalidParameterError(f"instance {target} not among {len(grids)} masks")
    shape = grids[target].shape
    others = torch.zeros(shape, dtype=torch.bool)
    for i, grid in enumerate(grids):
        if grid.shape != shape:
            raise DimensionMismatchError(f"mask {i} is {tuple(grid.shape)}, expected {tuple(shape)}")
        if i != target:
            others |= grid
    return (~(others & ~grids[target])).to(DTYPE)


def downsample_mask(mask, width: int, height: int) -> torch.Tensor:
    """Area-average to (height, width) and re-threshold at 0.5."""
    grid = as_grid(mask)
    if tuple(grid.shape) == (height, width):
        return (grid > 0.5).to(DTYPE)
    pooled = F.adaptive_avg_pool2d(grid[None, None], (height, width))[0, 0]
    return (pooled >= 0.5).to(DTYPE)


def mask_bbox(mask) -> Optional[tuple]:
    """(x0, y0, x1, y1) pixel rectangle of the foreground, inclusive; None if empty."""
    grid = as_grid(mask).detach().numpy() > 0.5
    ys, xs = np.nonzero(grid)
    if len(xs) == 0:
        return None
    return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())
