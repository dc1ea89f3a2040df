"""
Empirical-mean scale learning over a dataset of scenes.

Each round resets every object to its category's current mean scale (keeping
the fitted translation, so the projection is unchanged), optimizes all scenes,
and replaces each category mean by the mean of the optimized scales.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..config.schedules import FitSchedule, LossWeights
from ..config.settings import settings
from ..errors import InvalidParameterError
from ..scene.models import Scene
from .arrangement import optimize_arrangement

logger = logging.getLogger(__name__)

Histogram = Tuple[np.ndarray, np.ndarray]


@dataclass
class ScaleRound:
    """Outcome of one round: optimized scales, their means and histograms."""
    index: int
    means: Dict[str, float]
    scales: Dict[str, List[float]] = field(default_factory=dict)
    histograms: Dict[str, Histogram] = field(default_factory=dict)


@dataclass
class ScaleLoopResult:
    initial: Dict[str, float]
    rounds: List[ScaleRound] = field(default_factory=list)

    @property
    def final_means(self) -> Dict[str, float]:
        return dict(self.rounds[-1].means) if self.rounds else dict(self.initial)

    def categories(self) -> List[str]:
        present = set()
        for r in self.rounds:
            present.update(r.scales)
        return sorted(present)


def reset_scales(scene: Scene, means: Mapping[str, float]) -> Scene:
    """Scene with category means applied to the table and to every object."""
    categories = {
        name: row.model_copy(update={"mean_scale": means[name]}) if name in means else row
        for name, row in scene.categories.items()
    }
    objects = [o.with_pose(scale=means.get(o.category, o.scale)) for o in scene.objects]
    return scene.with_categories(categories).with_objects(objects)


def scale_histogram(values: Sequence[float], bins: Optional[int] = None) -> Histogram:
    """(counts, bin edges) of a set of scales."""
    return np.histogram(np.asarray(values, dtype=np.float64), bins=bins or settings.histogram_bins)


def empirical_scale_loop(
    scenes: Sequence[Scene],
    rounds: int,
    initial_means: Optional[Mapping[str, float]] = None,
    weights: Optional[LossWeights] = None,
    schedule: Optional[FitSchedule] = None,
    jobs: Optional[int] = None,
    resolution: Optional[int] = None,
    bins: Optional[int] = None,
    human_variance_weight: Optional[float] = None,
) -> ScaleLoopResult:
    """Alternate joint optimization of every scene with re-estimation of category means.

    A category absent from the dataset keeps its prior mean.
    """
    if not scenes:
        raise InvalidParameterError("the scale loop needs at least one scene")
    if rounds < 0:
        raise InvalidParameterError(f"rounds must be nonnegative, got {rounds}")
    jobs = jobs or settings.jobs

    means: Dict[str, float] = dict(scenes[0].mean_scales())
    for scene in scenes[1:]:
        for name, value in scene.mean_scales().items():
            means.setdefault(name, value)
    if initial_means:
        means.update(initial_means)
    result = ScaleLoopResult(initial=dict(means))

    for index in range(1, rounds + 1):
        prepared = [reset_scales(scene, means) for scene in scenes]

        def run(scene: Scene) -> Scene:
            stats = scene.stats()
            if human_variance_weight is not None:
                stats = stats.model_copy(update={"human_variance_weight": human_variance_weight})
            return optimize_arrangement(scene, weights, schedule, resolution, progress=False, stats=stats).scene

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            optimized = list(pool.map(run, prepared))

        scales: Dict[str, List[float]] = {}
        for scene in optimized:
            for obj in scene.objects:
                scales.setdefault(obj.category, []).append(obj.scale)

        means = dict(means)
        for category, values in sorted(scales.items()):
            means[category] = float(np.mean(values))
        histograms = {category: scale_histogram(values, bins) for category, values in sorted(scales.items())}
        result.rounds.append(ScaleRound(index=index, means=dict(means), scales=scales, histograms=histograms))
        summary = ", ".join(f"{c}={means[c]:.3f}" for c in sorted(scales))
        logger.info(f"Scale round {index}/{rounds}: {summary}")

    return result
