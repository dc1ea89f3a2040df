"""
The two pipeline stages: per-object fitting and joint arrangement.
"""

import logging
from typing import Dict, Optional, Tuple

from ..config.schedules import FitSchedule, LossWeights
from ..config.settings import settings
from ..optim.arrangement import ArrangementResult, optimize_arrangement
from ..optim.pose_fit import FitResult, select_exemplar
from ..raster.masks import occlusion_indicator
from ..scene.models import Rotation6D, Scene

logger = logging.getLogger(__name__)


def fit_scene(
    scene: Scene,
    schedule: Optional[FitSchedule] = None,
    weights: Optional[LossWeights] = None,
    jobs: Optional[int] = None,
    resolution: Optional[int] = None,
) -> Tuple[Scene, Dict[str, FitResult]]:
    """Select an exemplar and fit the pose of every object.

    Objects come back at their category mean scale. Objects with an empty
    mask keep their configured pose and get no result.
    """
    schedule = schedule or scene.fit_schedule
    weights = weights or scene.weights
    masks = scene.masks()
    results: Dict[str, FitResult] = {}
    objects = []
    for j, obj in enumerate(scene.objects):
        instance = len(scene.humans) + j
        row = scene.categories[obj.category]
        logger.info(f"Fitting {obj.name} ({obj.category}, {scene.library.exemplar_count(obj.category)} exemplar(s))")
        result = select_exemplar(
            scene.library.exemplars(obj.category),
            masks[instance],
            occlusion_indicator(instance, masks),
            scene.camera,
            schedule,
            bias=row.restart_bias,
            mean_scale=row.mean_scale,
            seed=scene.seed + instance,
            jobs=jobs,
            weights=weights,
            resolution=resolution,
        )
        if result is None:
            objects.append(obj)
            continue
        results[obj.name] = result
        objects.append(obj.with_pose(
            exemplar=result.exemplar,
            scale=result.scale,
            rotation=Rotation6D.from_matrix(result.rotation),
            translation=tuple(float(c) for c in result.translation),
        ))
        logger.info(f"{obj.name}: exemplar {result.exemplar}, loss {result.loss:.5f}")
    return scene.with_objects(objects), results


def independent_composition(scene: Scene) -> Scene:
    """Fitted poses at category mean scales, without joint optimization."""
    means = scene.mean_scales()
    return scene.with_objects([o.with_pose(scale=means[o.category]) for o in scene.objects])


def arrange_scene(
    scene: Scene,
    weights: Optional[LossWeights] = None,
    schedule: Optional[FitSchedule] = None,
    independent: bool = False,
    resolution: Optional[int] = None,
) -> ArrangementResult:
    """Joint stage, or the independent composition when ``independent`` is set."""
    if independent:
        logger.info("Independent composition: joint stage skipped")
        return ArrangementResult(scene=independent_composition(scene))
    return optimize_arrangement(scene, weights, schedule, resolution or settings.resolution)
