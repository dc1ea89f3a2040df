"""
Rotation parameterization and world-frame placement of humans and objects.
"""

import logging
from typing import Sequence, Tuple, Union

import numpy as np
import torch
from scipy.spatial.transform import Rotation

from ..errors import InvalidParameterError

logger = logging.getLogger(__name__)

DTYPE = torch.float64

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]

_DEGENERATE_EPS = 1e-8


def as_tensor(values: ArrayLike) -> torch.Tensor:
    """Convert to a float64 tensor without copying tensors that already match."""
    if isinstance(values, torch.Tensor):
        return values if values.dtype == DTYPE else values.to(DTYPE)
    return torch.as_tensor(np.asarray(values, dtype=np.float64), dtype=DTYPE)


def rotation_from_6d(a1: ArrayLike, a2: ArrayLike) -> torch.Tensor:
    """Gram-Schmidt the two column vectors into a rotation matrix.

    Raises InvalidParameterError when either vector vanishes or both are parallel.
    """
    a1 = as_tensor(a1)
    a2 = as_tensor(a2)
    n1 = torch.linalg.vector_norm(a1)
    n2 = torch.linalg.vector_norm(a2)
    if n1 < _DEGENERATE_EPS or n2 < _DEGENERATE_EPS:
        raise InvalidParameterError(f"degenerate 6D rotation: column norms {float(n1):.3g}, {float(n2):.3g}")
    if torch.linalg.vector_norm(torch.linalg.cross(a1 / n1, a2 / n2)) < _DEGENERATE_EPS:
        raise InvalidParameterError("degenerate 6D rotation: columns are parallel")
    return rot6d_to_matrix(torch.cat([a1, a2]))


def rot6d_to_matrix(rot6d: torch.Tensor) -> torch.Tensor:
    """Batched 6D to matrix conversion, (..., 6) -> (..., 3, 3)."""
    a1 = rot6d[..., 0:3]
    a2 = rot6d[..., 3:6]
    b1 = a1 / torch.linalg.vector_norm(a1, dim=-1, keepdim=True).clamp(min=1e-12)
    b2 = a2 - (b1 * a2).sum(dim=-1, keepdim=True) * b1
    b2 = b2 / torch.linalg.vector_norm(b2, dim=-1, keepdim=True).clamp(min=1e-12)
    b3 = torch.linalg.cross(b1, b2, dim=-1)
    return torch.stack([b1, b2, b3], dim=-1)


def matrix_to_6d(matrix: ArrayLike) -> torch.Tensor:
    """First two columns of a rotation matrix, (..., 3, 3) -> (..., 6)."""
    matrix = as_tensor(matrix)
    return torch.cat([matrix[..., :, 0], matrix[..., :, 1]], dim=-1)


def object_to_world(
    vertices: torch.Tensor, rotation: torch.Tensor, translation: torch.Tensor, scale: torch.Tensor
) -> torch.Tensor:
    """s * (R V + t); the scale multiplies the translated vertices."""
    return scale * (vertices @ rotation.transpose(-1, -2) + translation)


def human_to_world(
    vertices: torch.Tensor, weak_cam: Tuple[float, float, float], scale: torch.Tensor, focal_length: float
) -> torch.Tensor:
    """s * (V + [tx, ty, f / sigma]) for a weak-perspective camera (sigma, tx, ty)."""
    sigma, tx, ty = (float(c) for c in weak_cam)
    if sigma <= 0:
        raise InvalidParameterError(f"weak-perspective scale must be positive, got {sigma}")
    offset = torch.tensor([tx, ty, focal_length / sigma], dtype=vertices.dtype)
    return scale * (vertices + offset)


def centroid(points: ArrayLike) -> torch.Tensor:
    """Arithmetic mean of a nonempty point set."""
    points = as_tensor(points)
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidParameterError("centroid of an empty point set")
    return points.mean(dim=0)


def geodesic_distance(r1: ArrayLike, r2: ArrayLike) -> float:
    """Angle of the relative rotation between two matrices, in degrees."""
    r1 = np.asarray(as_tensor(r1).detach().numpy())
    r2 = np.asarray(as_tensor(r2).detach().numpy())
    cos = (np.trace(r1.T @ r2) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def matrix_to_quaternion(matrix: ArrayLike) -> np.ndarray:
    """Scalar-last quaternion (x, y, z, w) with w >= 0."""
    quat = Rotation.from_matrix(np.asarray(as_tensor(matrix).detach().numpy())).as_quat()
    return -quat if quat[3] < 0 else quat


def quaternion_to_matrix(quat: ArrayLike) -> np.ndarray:
    return Rotation.from_quat(np.asarray(quat, dtype=np.float64)).as_matrix()


def axis_angle_matrix(axis: str, degrees: float) -> np.ndarray:
    """Rotation about one coordinate axis."""
    return Rotation.from_euler(axis, degrees, degrees=True).as_matrix()
