"""
Rotation restart sampling.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from ..config.categories import RestartBias
from ..config.settings import settings
from ..errors import InvalidParameterError

logger = logging.getLogger(__name__)


def sample_rotations(
    n: int,
    bias: RestartBias = RestartBias.NONE,
    seed: int = 0,
    elevation_range: Optional[Tuple[float, float]] = None,
) -> np.ndarray:
    """(n, 3, 3) rotation matrices, deterministic for a given seed.

    Uniform over SO(3) without bias. Upright restarts spin the object about the
    camera's vertical axis (azimuth in [0, 360)) and tilt it about the horizontal
    axis (elevation), with no roll.
    """
    if n <= 0:
        raise InvalidParameterError(f"need at least one rotation, got {n}")
    if RestartBias(bias) == RestartBias.NONE:
        return Rotation.random(n, random_state=seed).as_matrix()

    low, high = settings.elevation_range if elevation_range is None else elevation_range
    rng = np.random.default_rng(seed)
    azimuth = rng.uniform(0.0, 360.0, size=n)
    elevation = rng.uniform(low, high, size=n)
    spin = Rotation.from_euler("y", azimuth, degrees=True)
    tilt = Rotation.from_euler("x", elevation, degrees=True)
    return (tilt * spin).as_matrix()


def elevation_of(rotation: np.ndarray) -> np.ndarray:
    """Elevation in degrees of rotations built as R_x(elevation) R_y(azimuth)."""
    rotation = np.asarray(rotation, dtype=np.float64)
    return np.degrees(np.arctan2(rotation[..., 2, 1], rotation[..., 1, 1]))
