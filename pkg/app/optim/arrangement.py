"""
Joint optimization of intrinsic scales, rotations and translations.
"""

import logging
import sys
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np
import torch
import torch.nn as nn
from tqdm.auto import tqdm

from ..config.categories import CategoryStats
from ..config.schedules import FitSchedule, LossWeights, Stage
from ..config.settings import settings
from ..errors import NumericalFailureError
from ..geometry.camera import Camera
from ..geometry.transforms import DTYPE, matrix_to_6d, rot6d_to_matrix
from ..interaction.detector import detect_interactions
from ..losses.arrangement import LossBreakdown, total_loss
from ..raster.masks import downsample_mask, occlusion_indicator
from ..scene.models import InstanceKind, Rotation6D, Scene
from ..scene.placement import PlacedInstance, PlacedScene
from .adam import AdamState, adam_step

logger = logging.getLogger(__name__)


class ArrangementModel(nn.Module):
    """Scene parameters of the joint stage.

    Scales are stored as logarithms; rotations as 6D vectors.
    """

    def __init__(self, scene: Scene, resolution: Optional[int] = None):
        super().__init__()
        self.scene = scene
        self.camera: Camera = scene.camera.resized(resolution or settings.resolution)
        cam = self.camera

        masks = [downsample_mask(m, cam.width, cam.height) for m in scene.masks()]
        self.masks = masks
        self.indicators = [occlusion_indicator(i, masks) for i in range(len(masks))]

        self.human_vertices = []
        for human in scene.humans:
            sigma, tx, ty = human.weak_cam.as_tuple()
            offset = torch.tensor([tx, ty, scene.camera.f / sigma], dtype=DTYPE)
            self.human_vertices.append(human.mesh.torch_vertices() + offset)
        self.object_meshes = [scene.mesh_for(o) for o in scene.objects]

        self.human_log_scale = nn.Parameter(
            torch.tensor([np.log(h.scale) for h in scene.humans], dtype=DTYPE).reshape(-1)
        )
        self.object_log_scale = nn.Parameter(
            torch.tensor([np.log(o.scale) for o in scene.objects], dtype=DTYPE).reshape(-1)
        )
        self.rot6d = nn.Parameter(
            torch.stack([matrix_to_6d(o.rotation.matrix()) for o in scene.objects]).reshape(-1, 6)
            if scene.objects else torch.zeros((0, 6), dtype=DTYPE)
        )
        self.translation = nn.Parameter(
            torch.tensor([o.translation for o in scene.objects], dtype=DTYPE).reshape(-1, 3)
        )

    def forward(self) -> PlacedScene:
        placed = PlacedScene(camera=self.camera)
        n_humans = len(self.scene.humans)
        for i, human in enumerate(self.scene.humans):
            scale = torch.exp(self.human_log_scale[i])
            placed.humans.append(PlacedInstance(
                index=i,
                name=human.name,
                kind=InstanceKind.HUMAN,
                vertices=scale * self.human_vertices[i],
                faces=human.mesh.torch_faces(),
                scale=scale,
                parts=human.mesh.torch_parts(),
                mask=self.masks[i] if human.mask is not None else None,
                indicator=self.indicators[i],
            ))
        rotations = rot6d_to_matrix(self.rot6d)
        for j, obj in enumerate(self.scene.objects):
            mesh = self.object_meshes[j]
            scale = torch.exp(self.object_log_scale[j])
            vertices = scale * (mesh.torch_vertices() @ rotations[j].T + self.translation[j])
            placed.objects.append(PlacedInstance(
                index=n_humans + j,
                name=obj.name,
                kind=InstanceKind.OBJECT,
                vertices=vertices,
                faces=mesh.torch_faces(),
                scale=scale,
                parts=mesh.torch_parts(),
                category=obj.category,
                mask=self.masks[n_humans + j] if obj.mask is not None else None,
                indicator=self.indicators[n_humans + j],
            ))
        return placed

    def named_tensors(self) -> Dict[str, torch.Tensor]:
        return {name: p.detach().clone() for name, p in self.named_parameters()}

    def load_tensors(self, values: Dict[str, torch.Tensor]) -> None:
        with torch.no_grad():
            for name, p in self.named_parameters():
                p.copy_(values[name])

    def to_scene(self) -> Scene:
        """Scene carrying the current parameters."""
        humans = [
            replace(h, scale=float(torch.exp(s)))
            for h, s in zip(self.scene.humans, self.human_log_scale.detach())
        ]
        objects = [
            o.with_pose(
                scale=float(torch.exp(self.object_log_scale[j].detach())),
                rotation=Rotation6D.from_vector(self.rot6d[j].detach().tolist()),
                translation=tuple(self.translation[j].detach().tolist()),
            )
            for j, o in enumerate(self.scene.objects)
        ]
        return self.scene.with_humans(humans).with_objects(objects)


@dataclass
class ArrangementResult:
    scene: Scene
    log: List[List] = field(default_factory=list)
    initial: Optional[Dict[str, float]] = None
    final: Optional[Dict[str, float]] = None
    best_iteration: int = 0


def evaluate_arrangement(scene: Scene, weights: Optional[LossWeights] = None,
                         resolution: Optional[int] = None) -> LossBreakdown:
    """Joint objective of a scene at its current parameters."""
    model = ArrangementModel(scene, resolution)
    weights = weights or scene.weights
    with torch.no_grad():
        return total_loss(model(), weights, Stage.JOINT, scene.stats(), scene.categories)


def optimize_arrangement(
    scene: Scene,
    weights: Optional[LossWeights] = None,
    schedule: Optional[FitSchedule] = None,
    resolution: Optional[int] = None,
    progress: bool = True,
    stats: Optional[CategoryStats] = None,
) -> ArrangementResult:
    """Adam over every scale, rotation and translation; returns the best iterate seen.

    Interactions are recomputed from the current parameters at every iteration.
    """
    if scene.is_empty:
        logger.info("Empty scene, nothing to arrange")
        return ArrangementResult(scene=scene)

    weights = weights or scene.weights
    schedule = schedule or scene.joint_schedule
    stats = stats or scene.stats()
    model = ArrangementModel(scene, resolution)
    names = [name for name, _ in model.named_parameters()]
    state = AdamState(lr=schedule.lr)

    log: List[List] = []
    best_value, best_params, best_iteration = float("inf"), model.named_tensors(), 0
    initial = final = None
    show = progress and sys.stderr.isatty()
    loop = tqdm(range(schedule.iterations + 1), disable=not show, desc="arrange")
    for it in loop:
        placed = model()
        interactions = detect_interactions(placed, scene.categories) if weights.interaction > 0 else None
        breakdown = total_loss(placed, weights, Stage.JOINT, stats, scene.categories, interactions)
        value = float(breakdown.total.detach())
        log.append(breakdown.as_row(it))
        final = breakdown.as_dict()
        if initial is None:
            initial = final
        if np.isfinite(value) and value < best_value:
            best_value, best_params, best_iteration = value, model.named_tensors(), it
        loop.set_description(f"arrange loss={value:.4g}")
        # the last pass only scores the final update
        if it == schedule.iterations:
            break
        if not breakdown.total.requires_grad:
            break
        params = dict(model.named_parameters())
        grads = torch.autograd.grad(breakdown.total, [params[n] for n in names], allow_unused=True)
        model.load_tensors(adam_step(state, params, dict(zip(names, grads))))

    if not np.isfinite(best_value):
        raise NumericalFailureError("joint optimization produced no finite loss")
    model.load_tensors(best_params)
    logger.info(
        f"Arrangement finished: loss {initial['total']:.5g} -> {best_value:.5g} "
        f"(best at iteration {best_iteration})"
    )
    return ArrangementResult(
        scene=model.to_scene(), log=log, initial=initial, final=final, best_iteration=best_iteration
    )
