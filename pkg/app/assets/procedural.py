"""
Procedural stand-in meshes built from boxes.

Objects are normalized so their longest side is 1 and centered on the
origin; category mean scales then give metric size. The human is metric.
Every box is its own closed component. Frames follow the camera axes, so
"up" is -y.
"""

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ..errors import MeshLookupError
from ..geometry.mesh import TriMesh
from ..geometry.transforms import axis_angle_matrix

logger = logging.getLogger(__name__)

HUMAN_PARTS = ("L Palm", "R Palm", "Butt", "Back", "L Foot", "R Foot")
HUMAN_POSES = ("standing", "holding", "seated")

_BOX_CORNERS = np.array(
    [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.float64
) - 0.5
# Outward-facing triangles over the corner numbering above
_BOX_FACES = np.array([
    [0, 2, 1], [1, 2, 3],
    [4, 5, 6], [5, 7, 6],
    [0, 1, 4], [1, 5, 4],
    [2, 6, 3], [3, 6, 7],
    [0, 4, 2], [2, 4, 6],
    [1, 3, 5], [3, 7, 5],
], dtype=np.int64)


class MeshBuilder:
    """Accumulates boxes and their part labels into one mesh."""

    def __init__(self, name: str):
        self.name = name
        self._vertices: List[np.ndarray] = []
        self._faces: List[np.ndarray] = []
        self._parts: Dict[str, set] = defaultdict(set)
        self._count = 0

    def add_box(
        self,
        center: Sequence[float],
        size: Sequence[float],
        parts: Iterable[str] = (),
        rotation: Optional[np.ndarray] = None,
    ) -> "MeshBuilder":
        corners = _BOX_CORNERS * np.asarray(size, dtype=np.float64)
        if rotation is not None:
            corners = corners @ np.asarray(rotation).T
        self._vertices.append(corners + np.asarray(center, dtype=np.float64))
        self._faces.append(_BOX_FACES + self._count)
        for part in parts:
            self._parts[part].update(range(self._count, self._count + 8))
        self._count += 8
        return self

    def build(self, normalize: bool = False) -> TriMesh:
        vertices = np.concatenate(self._vertices)
        lo, hi = vertices.min(axis=0), vertices.max(axis=0)
        vertices = vertices - (lo + hi) / 2.0
        if normalize:
            vertices = vertices / float((hi - lo).max())
        return TriMesh(vertices=vertices, faces=np.concatenate(self._faces), parts=dict(self._parts), name=self.name)


def _bat(variant: int) -> MeshBuilder:
    b = MeshBuilder(f"bat_{variant}")
    b.add_box((-0.3, 0, 0), (0.3, 0.035, 0.035), ["Handle"])
    b.add_box((-0.46, 0, 0), (0.02, 0.05, 0.05), ["Handle"])
    b.add_box((0.15, 0, 0), (0.6, 0.07, 0.07))
    return b


def _tennis_racket(variant: int) -> MeshBuilder:
    b = MeshBuilder(f"tennis_racket_{variant}")
    b.add_box((-0.23, 0, 0), (0.22, 0.035, 0.03), ["Handle"])
    b.add_box((-0.07, 0, 0), (0.1, 0.06, 0.02))
    b.add_box((0.17, 0, 0), (0.34, 0.26, 0.02))
    return b


_BENCH_VARIANTS = [
    # length, seat height, back height, depth
    (1.5, 0.45, 0.45, 0.45),
    (1.1, 0.42, 0.3, 0.4),
    (1.9, 0.48, 0.6, 0.5),
]


def _bench(variant: int) -> MeshBuilder:
    length, seat_h, back_h, depth = _BENCH_VARIANTS[variant]
    b = MeshBuilder(f"bench_{variant}")
    b.add_box((0, -seat_h, 0), (length, 0.06, depth), ["Seat"])
    b.add_box((0, -seat_h - back_h / 2.0, depth / 2.0 - 0.03), (length, back_h, 0.05), ["Seat Back"])
    for sx in (-1, 1):
        for sz in (-1, 1):
            b.add_box(
                (sx * (length / 2.0 - 0.08), -seat_h / 2.0, sz * (depth / 2.0 - 0.05)),
                (0.06, seat_h - 0.03, 0.06),
            )
    return b


def _bicycle(variant: int) -> MeshBuilder:
    b = MeshBuilder(f"bicycle_{variant}")
    for sx in (-1, 1):
        b.add_box((sx * 0.6, -0.35, 0), (0.7, 0.7, 0.04))
    b.add_box((0, -0.6, 0), (1.0, 0.08, 0.05))
    b.add_box((-0.3, -0.78, 0), (0.04, 0.3, 0.04))
    b.add_box((-0.3, -0.95, 0), (0.25, 0.06, 0.12), ["Seat"])
    b.add_box((0.5, -0.85, 0), (0.04, 0.4, 0.04))
    b.add_box((0.5, -1.05, 0), (0.06, 0.05, 0.6), ["Handlebars"])
    return b


def _laptop(variant: int) -> MeshBuilder:
    opening = (95.0, 115.0, 135.0)[variant]
    b = MeshBuilder(f"laptop_{variant}")
    b.add_box((0, 0, 0), (0.35, 0.02, 0.24), ["Laptop"])
    tilt = opening - 90.0
    direction = np.array([0.0, -np.cos(np.radians(tilt)), np.sin(np.radians(tilt))])
    hinge = np.array([0.0, -0.01, 0.12])
    b.add_box(hinge + 0.11 * direction, (0.35, 0.22, 0.01), ["Laptop"], rotation=axis_angle_matrix("x", -tilt))
    return b


_MOTORCYCLE_VARIANTS = [
    # body length, body height, seat height, bar height, windshield
    (1.1, 0.35, 0.82, 0.95, False),
    (1.1, 0.35, 0.82, 1.0, True),
    (1.5, 0.25, 0.65, 1.15, False),
    (0.9, 0.2, 1.0, 1.1, False),
]


def _motorcycle(variant: int) -> MeshBuilder:
    body_len, body_h, seat_h, bar_h, windshield = _MOTORCYCLE_VARIANTS[variant]
    wheel_x = body_len / 2.0 + 0.15
    b = MeshBuilder(f"motorcycle_{variant}")
    for sx in (-1, 1):
        b.add_box((sx * wheel_x, -0.33, 0), (0.65, 0.65, 0.12))
    b.add_box((0, -0.6, 0), (body_len, body_h, 0.3))
    b.add_box((-0.25, -seat_h, 0), (0.6, 0.08, 0.3), ["Seat"])
    b.add_box((wheel_x - 0.1, -(0.33 + bar_h) / 2.0, 0), (0.05, bar_h - 0.33, 0.05))
    b.add_box((wheel_x - 0.1, -bar_h, 0), (0.06, 0.05, 0.75), ["Handlebars"])
    if windshield:
        b.add_box((wheel_x - 0.02, -bar_h - 0.2, 0), (0.03, 0.35, 0.45))
    return b


def _skateboard(variant: int) -> MeshBuilder:
    b = MeshBuilder(f"skateboard_{variant}")
    b.add_box((0, -0.1, 0), (0.8, 0.02, 0.2), ["Skateboard"])
    for sx in (-1, 1):
        b.add_box((sx * 0.28, -0.05, 0), (0.06, 0.07, 0.2))
    return b


def _surfboard(variant: int) -> MeshBuilder:
    b = MeshBuilder(f"surfboard_{variant}")
    b.add_box((0, 0, 0), (2.1, 0.06, 0.5), ["Surfboard"])
    b.add_box((-0.9, 0.08, 0), (0.12, 0.12, 0.02))
    return b


_OBJECT_BUILDERS = {
    "bat": (_bat, 1),
    "bench": (_bench, len(_BENCH_VARIANTS)),
    "bicycle": (_bicycle, 1),
    "laptop": (_laptop, 3),
    "motorcycle": (_motorcycle, len(_MOTORCYCLE_VARIANTS)),
    "skateboard": (_skateboard, 1),
    "surfboard": (_surfboard, 1),
    "tennis_racket": (_tennis_racket, 1),
}

PROCEDURAL_CATEGORIES = tuple(_OBJECT_BUILDERS)


def procedural_exemplar_count(category: str) -> int:
    if category not in _OBJECT_BUILDERS:
        raise MeshLookupError(f"no procedural mesh for category '{category}'")
    return _OBJECT_BUILDERS[category][1]


def procedural_object(category: str, variant: int = 0) -> TriMesh:
    """Unit-length stand-in mesh of one category exemplar."""
    count = procedural_exemplar_count(category)
    if not 0 <= variant < count:
        raise MeshLookupError(f"category '{category}' has {count} procedural exemplars, asked for {variant}")
    builder, _ = _OBJECT_BUILDERS[category]
    return builder(variant).build(normalize=True)


def procedural_exemplars(category: str) -> List[TriMesh]:
    return [procedural_object(category, k) for k in range(procedural_exemplar_count(category))]


def procedural_box(size=(1.0, 1.0, 1.0), name: str = "box") -> TriMesh:
    """Axis-aligned box centered on the origin."""
    return MeshBuilder(name).add_box((0, 0, 0), size).build()


def procedural_human(pose: str = "standing") -> TriMesh:
    """Box-figure body about 1.7 m tall facing the camera (-z)."""
    if pose not in HUMAN_POSES:
        raise MeshLookupError(f"unknown human pose '{pose}', expected one of {HUMAN_POSES}")
    b = MeshBuilder(f"human_{pose}")
    b.add_box((0, -0.72, 0), (0.2, 0.24, 0.22))
    b.add_box((0, -0.3, 0), (0.38, 0.55, 0.22))
    b.add_box((0, -0.3, 0.1), (0.34, 0.5, 0.03), ["Back"])
    b.add_box((0, 0.02, 0), (0.36, 0.14, 0.22))
    b.add_box((0, 0.05, 0.09), (0.3, 0.1, 0.05), ["Butt"])

    # The person's left is image right (+x)
    for sx, side in ((1, "L"), (-1, "R")):
        if pose == "seated":
            b.add_box((sx * 0.1, 0.05, -0.22), (0.14, 0.14, 0.45))
            b.add_box((sx * 0.1, 0.3, -0.42), (0.12, 0.45, 0.12))
            b.add_box((sx * 0.1, 0.54, -0.48), (0.1, 0.04, 0.22), [f"{side} Foot"])
        else:
            b.add_box((sx * 0.1, 0.45, 0), (0.14, 0.75, 0.14))
            b.add_box((sx * 0.1, 0.85, -0.05), (0.1, 0.04, 0.24), [f"{side} Foot"])

        if pose == "holding":
            b.add_box((sx * 0.25, -0.35, 0), (0.08, 0.35, 0.08))
            b.add_box((sx * 0.15, -0.12, -0.15), (0.25, 0.08, 0.3))
            b.add_box((sx * 0.05, -0.05, -0.3), (0.08, 0.1, 0.06), [f"{side} Palm"])
        elif pose == "seated":
            b.add_box((sx * 0.25, -0.25, 0), (0.08, 0.5, 0.08))
            b.add_box((sx * 0.23, -0.02, -0.2), (0.08, 0.06, 0.1), [f"{side} Palm"])
        else:
            b.add_box((sx * 0.25, -0.25, 0), (0.08, 0.55, 0.08))
            b.add_box((sx * 0.25, 0.08, 0), (0.08, 0.1, 0.05), [f"{side} Palm"])

    mesh = b.build()
    logger.debug(f"Built procedural human '{pose}': {mesh.num_vertices} vertices")
    return mesh


def procedural_library() -> Dict[str, List[TriMesh]]:
    return {category: procedural_exemplars(category) for category in PROCEDURAL_CATEGORIES}
