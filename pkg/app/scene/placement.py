"""
World-frame placement of scene instances.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import torch

from ..geometry.camera import Camera
from ..geometry.transforms import DTYPE, as_tensor, human_to_world, object_to_world
from .models import HumanInstance, InstanceKind, ObjectInstance, Scene


def place_human(human: HumanInstance, cam: Camera) -> np.ndarray:
    """s * (V + [tx, ty, f / sigma])."""
    scale = torch.tensor(human.scale, dtype=DTYPE)
    return human_to_world(human.mesh.torch_vertices(), human.weak_cam.as_tuple(), scale, cam.f).numpy()


def place_object(obj: ObjectInstance, library) -> np.ndarray:
    """s * (R V + t) for the instance's exemplar mesh."""
    mesh = library.get(obj.category, obj.exemplar)
    world = object_to_world(
        mesh.torch_vertices(),
        as_tensor(obj.rotation.matrix()),
        as_tensor(obj.translation),
        torch.tensor(obj.scale, dtype=DTYPE),
    )
    return world.numpy()


@dataclass
class PlacedInstance:
    """One instance in world coordinates, possibly carrying gradients."""
    index: int
    name: str
    kind: InstanceKind
    vertices: torch.Tensor
    faces: torch.Tensor
    scale: torch.Tensor
    parts: Dict[str, torch.Tensor] = field(default_factory=dict)
    category: Optional[str] = None
    mask: Optional[torch.Tensor] = None
    indicator: Optional[torch.Tensor] = None

    def part_vertices(self, part: str) -> torch.Tensor:
        return self.vertices[self.parts[part]]


@dataclass
class PlacedScene:
    camera: Camera
    humans: List[PlacedInstance] = field(default_factory=list)
    objects: List[PlacedInstance] = field(default_factory=list)

    @property
    def instances(self) -> List[PlacedInstance]:
        return self.humans + self.objects


def place_scene(scene: Scene) -> PlacedScene:
    """Place every instance with its current parameters, without gradients."""
    placed = PlacedScene(camera=scene.camera)
    for i, human in enumerate(scene.humans):
        placed.humans.append(PlacedInstance(
            index=i,
            name=human.name,
            kind=InstanceKind.HUMAN,
            vertices=torch.as_tensor(place_human(human, scene.camera)),
            faces=human.mesh.torch_faces(),
            scale=torch.tensor(human.scale, dtype=DTYPE),
            parts=human.mesh.torch_parts(),
        ))
    for j, obj in enumerate(scene.objects):
        mesh = scene.mesh_for(obj)
        placed.objects.append(PlacedInstance(
            index=len(scene.humans) + j,
            name=obj.name,
            kind=InstanceKind.OBJECT,
            vertices=torch.as_tensor(place_object(obj, scene.library)),
            faces=mesh.torch_faces(),
            scale=torch.tensor(obj.scale, dtype=DTYPE),
            parts=mesh.torch_parts(),
            category=obj.category,
        ))
    return placed
