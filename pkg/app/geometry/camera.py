"""
Perspective pinhole camera shared by every instance of a scene.

Normalized device coordinates put the longer image side on [-1, 1];
x points right, y points down, z forward.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import torch

from ..errors import BehindCameraError, InvalidParameterError
from .transforms import ArrayLike, as_tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a fixed focal length."""
    width: int
    height: int
    f: float = 1.0

    def __post_init__(self):
        if self.f <= 0:
            raise InvalidParameterError(f"focal length must be positive, got {self.f}")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParameterError(f"invalid image size {self.width}x{self.height}")

    @property
    def long_side(self) -> int:
        return max(self.width, self.height)

    @property
    def ndc_extent(self) -> Tuple[float, float]:
        """Half-extent of the image in NDC along x and y."""
        return self.width / self.long_side, self.height / self.long_side

    def resized(self, long_side: int) -> "Camera":
        """Same camera at a different resolution."""
        ratio = long_side / self.long_side
        return Camera(
            width=max(1, int(round(self.width * ratio))),
            height=max(1, int(round(self.height * ratio))),
            f=self.f,
        )

    def ndc_to_pixel(self, uv: torch.Tensor) -> torch.Tensor:
        half = self.long_side / 2.0
        offset = torch.tensor([self.width / 2.0, self.height / 2.0], dtype=uv.dtype)
        return uv * half + offset

    def pixel_to_ndc(self, pixels: torch.Tensor) -> torch.Tensor:
        half = self.long_side / 2.0
        offset = torch.tensor([self.width / 2.0, self.height / 2.0], dtype=pixels.dtype)
        return (pixels - offset) / half

    def pixel_centers_ndc(self) -> Tuple[torch.Tensor, torch.Tensor]:
        """NDC coordinates of the pixel centers as (x, y) grids of shape (H, W)."""
        half = self.long_side / 2.0
        xs = (torch.arange(self.width, dtype=torch.float64) + 0.5 - self.width / 2.0) / half
        ys = (torch.arange(self.height, dtype=torch.float64) + 0.5 - self.height / 2.0) / half
        grid_y, grid_x = torch.meshgrid(ys, xs, indexing="ij")
        return grid_x, grid_y


def project_ndc(points: torch.Tensor, f: float) -> Tuple[torch.Tensor, torch.Tensor]:
    """Perspective divide without validation: returns (N, 2) NDC and (N,) depth."""
    z = points[..., 2]
    uv = f * points[..., :2] / z.unsqueeze(-1)
    return uv, z


def project(points: ArrayLike, cam: Camera) -> Tuple[torch.Tensor, torch.Tensor]:
    """Project world points to pixel coordinates and depth.

    Raises BehindCameraError if any point has z <= 0.
    """
    points = as_tensor(points).reshape(-1, 3)
    if points.shape[0] and bool((points[:, 2] <= 0).any()):
        count = int((points[:, 2] <= 0).sum())
        raise BehindCameraError(f"{count} point(s) on or behind the camera plane")
    uv, depth = project_ndc(points, cam.f)
    return cam.ndc_to_pixel(uv), depth
