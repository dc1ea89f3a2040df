"""
Triangle mesh with named part regions.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np
import torch

from ..errors import ConfigurationError, InvalidParameterError
from .transforms import DTYPE

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangle mesh in its local frame.

    ``parts`` maps a part name to the vertex indices of that region.
    """
    vertices: np.ndarray
    faces: np.ndarray
    parts: Mapping[str, FrozenSet[int]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        vertices.setflags(write=False)
        faces.setflags(write=False)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "parts", {k: frozenset(int(i) for i in v) for k, v in self.parts.items()})

        if faces.size and (faces.min() < 0 or faces.max() >= len(vertices)):
            raise InvalidParameterError(
                f"mesh '{self.name}': face index out of range for {len(vertices)} vertices"
            )
        for part, indices in self.parts.items():
            if indices and (min(indices) < 0 or max(indices) >= len(vertices)):
                raise InvalidParameterError(
                    f"mesh '{self.name}': part '{part}' references a vertex out of range"
                )

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)

    @property
    def is_empty(self) -> bool:
        return self.num_faces == 0

    def is_watertight(self) -> bool:
        """Every undirected edge is shared by exactly two faces."""
        if self.is_empty:
            return False
        edges = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        _, counts = np.unique(edges, axis=0, return_counts=True)
        return bool(np.all(counts == 2))

    def part_indices(self, part: str) -> np.ndarray:
        if part not in self.parts:
            raise ConfigurationError(f"mesh '{self.name}' has no part '{part}'")
        return np.array(sorted(self.parts[part]), dtype=np.int64)

    def bounding_box(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def extents(self) -> np.ndarray:
        lo, hi = self.bounding_box()
        return hi - lo

    def diameter(self) -> float:
        """Diagonal over the two largest bounding-box extents."""
        if self.num_vertices == 0:
            return 0.0
        largest = np.sort(self.extents())[-2:]
        return float(np.hypot(largest[0], largest[1]))

    def torch_vertices(self) -> torch.Tensor:
        return torch.as_tensor(np.array(self.vertices), dtype=DTYPE)

    def torch_faces(self) -> torch.Tensor:
        return torch.as_tensor(np.array(self.faces), dtype=torch.long)

    def torch_parts(self) -> Dict[str, torch.Tensor]:
        return {name: torch.as_tensor(self.part_indices(name)) for name in self.parts}

    def warn_if_open(self) -> None:
        if not self.is_empty and not self.is_watertight():
            logger.warning(f"Mesh '{self.name}' is not watertight; collision tests may be unreliable")

    @classmethod
    def empty(cls, name: str = "") -> "TriMesh":
        return cls(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3), dtype=np.int64), name=name)


def concatenate(meshes: Sequence[TriMesh], name: str = "", prefixes: Optional[Iterable[str]] = None) -> TriMesh:
    """Merge meshes into one, offsetting faces and optionally prefixing part names."""
    prefixes = list(prefixes) if prefixes is not None else [""] * len(meshes)
    vertices, faces, parts = [], [], {}
    offset = 0
    for mesh, prefix in zip(meshes, prefixes):
        vertices.append(mesh.vertices)
        faces.append(mesh.faces + offset)
        for part, indices in mesh.parts.items():
            key = f"{prefix}{part}"
            parts[key] = frozenset(parts.get(key, frozenset())) | {i + offset for i in indices}
        offset += mesh.num_vertices
    if not vertices:
        return TriMesh.empty(name)
    return TriMesh(vertices=np.concatenate(vertices), faces=np.concatenate(faces), parts=parts, name=name)
