"""
Interaction detection from expanded 3D bounding boxes.

A human and an object interact when their boxes, each grown by the category's
coarse factor, overlap in x and y and their centroid depths differ by less
than the category threshold. Part pairs of interacting instances use the
fine factor on the part boxes.
"""

import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional, Set, Tuple, Union

import numpy as np
import torch

from ..config.categories import CategoryConfig
from ..errors import InvalidParameterError
from ..scene.models import Scene
from ..scene.placement import PlacedInstance, PlacedScene, place_scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Box3D:
    """Axis-aligned box."""
    lo: np.ndarray
    hi: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    def overlaps_xy(self, other: "Box3D") -> bool:
        return bool(np.all(self.lo[:2] <= other.hi[:2]) and np.all(other.lo[:2] <= self.hi[:2]))


def expanded_bbox(points, expand: float) -> Box3D:
    """Bounding box grown on each side by ``expand`` times its own extent."""
    if isinstance(points, torch.Tensor):
        points = points.detach().numpy()
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(points) == 0:
        raise InvalidParameterError("bounding box of an empty point set")
    if expand < 0:
        raise InvalidParameterError(f"expansion must be nonnegative, got {expand}")
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    grow = expand * (hi - lo)
    return Box3D(lo=lo - grow, hi=hi + grow)


@dataclass
class InteractionSet:
    # (human index, object index) into PlacedScene.humans / .objects
    pairs: Set[Tuple[int, int]] = field(default_factory=set)
    # (human index, human part, object index, object part)
    part_pairs: Set[Tuple[int, str, int, str]] = field(default_factory=set)

    def is_empty(self) -> bool:
        return not self.pairs

    def sorted_pairs(self):
        return sorted(self.pairs)

    def sorted_part_pairs(self):
        return sorted(self.part_pairs)


def _close_in_depth(a: np.ndarray, b: np.ndarray, threshold: float) -> bool:
    return abs(float(a.mean(axis=0)[2]) - float(b.mean(axis=0)[2])) < threshold


def _interacting(a: np.ndarray, b: np.ndarray, expand: float, threshold: float) -> bool:
    if not expanded_bbox(a, expand).overlaps_xy(expanded_bbox(b, expand)):
        return False
    return _close_in_depth(a, b, threshold)


def _vertices(instance: PlacedInstance) -> np.ndarray:
    return instance.vertices.detach().numpy()


def detect_interactions(
    scene: Union[Scene, PlacedScene], table: Optional[Mapping[str, CategoryConfig]] = None
) -> InteractionSet:
    """Coarse (human, object) pairs and their active part pairs."""
    if isinstance(scene, Scene):
        table = scene.categories if table is None else table
        scene = place_scene(scene)
    if table is None:
        raise InvalidParameterError("detect_interactions needs a category table for placed scenes")

    result = InteractionSet()
    for obj in scene.objects:
        row = table.get(obj.category)
        if row is None or obj.vertices.shape[0] == 0:
            continue
        obj_vertices = _vertices(obj)
        for human in scene.humans:
            if human.vertices.shape[0] == 0:
                continue
            human_vertices = _vertices(human)
            if not _interacting(human_vertices, obj_vertices, row.coarse_xy_expand, row.z_depth_threshold):
                continue
            h, o = human.index, obj.index - len(scene.humans)
            result.pairs.add((h, o))
            for obj_part, human_part in row.part_pairs:
                if obj_part not in obj.parts or human_part not in human.parts:
                    continue
                p_obj = obj_vertices[obj.parts[obj_part].numpy()]
                p_human = human_vertices[human.parts[human_part].numpy()]
                if len(p_obj) == 0 or len(p_human) == 0:
                    continue
                if _interacting(p_human, p_obj, row.fine_xy_expand, row.z_depth_threshold):
                    result.part_pairs.add((h, human_part, o, obj_part))
    logger.debug(f"{len(result.pairs)} interacting pairs, {len(result.part_pairs)} active part pairs")
    return result
