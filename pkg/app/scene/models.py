"""
Immutable scene value objects.

Instances are indexed humans first, then objects; that order is the
instance id used for occlusion indicators and depth ordering.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TYPE_CHECKING, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.categories import CategoryConfig, CategoryStats, default_category_table
from ..config.schedules import FitSchedule, LossWeights
from ..errors import DimensionMismatchError, InvalidParameterError
from ..geometry.camera import Camera
from ..geometry.mesh import TriMesh
from ..geometry.transforms import matrix_to_6d, rotation_from_6d

if TYPE_CHECKING:
    from ..assets.library import MeshLibrary


class InstanceKind(Enum):
    HUMAN = "human"
    OBJECT = "object"


@dataclass(frozen=True, eq=False)
class Mask:
    """Binary mask, row-major (H, W)."""
    data: np.ndarray

    def __post_init__(self):
        data = (np.asarray(self.data) != 0).astype(np.uint8)
        if data.ndim != 2:
            raise InvalidParameterError(f"mask must be 2D, got shape {data.shape}")
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def is_empty(self) -> bool:
        return not self.data.any()

    def foreground_count(self) -> int:
        return int(self.data.sum())

    def bbox(self) -> Optional[Tuple[int, int, int, int]]:
        ys, xs = np.nonzero(self.data)
        if len(xs) == 0:
            return None
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.data, other.data)

    __hash__ = None

    @classmethod
    def zeros(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=np.uint8))


@dataclass(frozen=True)
class Rotation6D:
    """First two columns of a rotation matrix before orthonormalization."""
    a1: Tuple[float, float, float] = (1.0, 0.0, 0.0)
    a2: Tuple[float, float, float] = (0.0, 1.0, 0.0)

    def matrix(self) -> np.ndarray:
        return rotation_from_6d(self.a1, self.a2).numpy()

    def as_vector(self) -> np.ndarray:
        return np.array(self.a1 + self.a2, dtype=np.float64)

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "Rotation6D":
        values = [float(v) for v in values]
        return cls(a1=tuple(values[:3]), a2=tuple(values[3:6]))

    @classmethod
    def from_matrix(cls, matrix) -> "Rotation6D":
        return cls.from_vector(matrix_to_6d(np.asarray(matrix, dtype=np.float64)).tolist())


@dataclass(frozen=True)
class WeakCamera:
    """Weak-perspective camera (sigma, tx, ty) of one human."""
    sigma: float
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if self.sigma <= 0:
            raise InvalidParameterError(f"weak-perspective scale must be positive, got {self.sigma}")

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.sigma, self.tx, self.ty


@dataclass(frozen=True, eq=False)
class HumanInstance:
    """Posed body mesh with its weak-perspective camera."""
    mesh: TriMesh
    weak_cam: WeakCamera
    scale: float = 1.0
    mask: Optional[Mask] = None
    name: str = "human"

    def __post_init__(self):
        if self.scale <= 0:
            raise InvalidParameterError(f"human '{self.name}' scale must be positive, got {self.scale}")

    @property
    def vertices(self) -> np.ndarray:
        return self.mesh.vertices

    @property
    def parts(self) -> Mapping[str, FrozenSet[int]]:
        return self.mesh.parts


@dataclass(frozen=True, eq=False)
class ObjectInstance:
    """Object of a library category; world = scale * (R V + translation)."""
    category: str
    exemplar: int = 0
    scale: float = 1.0
    rotation: Rotation6D = field(default_factory=Rotation6D)
    translation: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    mask: Optional[Mask] = None
    name: str = "object"

    def __post_init__(self):
        if self.scale <= 0:
            raise InvalidParameterError(f"object '{self.name}' scale must be positive, got {self.scale}")
        object.__setattr__(self, "translation", tuple(float(c) for c in self.translation))

    @property
    def bbox2d(self) -> Optional[Tuple[int, int, int, int]]:
        return self.mask.bbox() if self.mask is not None else None

    def with_pose(self, **changes) -> "ObjectInstance":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Scene:
    """All instances of one image plus their configuration."""
    camera: Camera
    library: "MeshLibrary"
    humans: Tuple[HumanInstance, ...] = ()
    objects: Tuple[ObjectInstance, ...] = ()
    categories: Mapping[str, CategoryConfig] = field(default_factory=default_category_table)
    weights: LossWeights = field(default_factory=LossWeights)
    fit_schedule: FitSchedule = field(default_factory=FitSchedule.fit_defaults)
    joint_schedule: FitSchedule = field(default_factory=FitSchedule.joint_defaults)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "humans", tuple(self.humans))
        object.__setattr__(self, "objects", tuple(self.objects))
        for name, mask in self.named_masks():
            if mask is not None and (mask.width, mask.height) != (self.camera.width, self.camera.height):
                raise DimensionMismatchError(
                    f"mask of '{name}' is {mask.width}x{mask.height}, "
                    f"camera is {self.camera.width}x{self.camera.height}"
                )

    @property
    def is_empty(self) -> bool:
        return not self.humans and not self.objects

    @property
    def instance_count(self) -> int:
        return len(self.humans) + len(self.objects)

    def instance_names(self) -> List[str]:
        return [h.name for h in self.humans] + [o.name for o in self.objects]

    def named_masks(self) -> List[Tuple[str, Optional[Mask]]]:
        return [(h.name, h.mask) for h in self.humans] + [(o.name, o.mask) for o in self.objects]

    def masks(self) -> List[Mask]:
        """Every instance mask, empty where an instance has none."""
        return [m if m is not None else Mask.zeros(self.camera.width, self.camera.height) for _, m in self.named_masks()]

    def stats(self) -> CategoryStats:
        return CategoryStats.from_table(self.categories)

    def mesh_for(self, obj: ObjectInstance) -> TriMesh:
        return self.library.get(obj.category, obj.exemplar)

    def with_objects(self, objects: Sequence[ObjectInstance]) -> "Scene":
        return replace(self, objects=tuple(objects))

    def with_humans(self, humans: Sequence[HumanInstance]) -> "Scene":
        return replace(self, humans=tuple(humans))

    def with_categories(self, categories: Mapping[str, CategoryConfig]) -> "Scene":
        return replace(self, categories=dict(categories))

    def with_weights(self, weights: LossWeights) -> "Scene":
        return replace(self, weights=weights)

    def mean_scales(self) -> Dict[str, float]:
        return {name: row.mean_scale for name, row in self.categories.items()}
