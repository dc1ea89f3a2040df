"""
Terms of the joint arrangement objective and their weighted sum.
"""

import logging
from dataclasses import dataclass, fields
from typing import Dict, List, Mapping, Optional, Sequence

import torch
import torch.nn.functional as F

from ..config.categories import CategoryConfig, CategoryStats
from ..config.schedules import LossWeights, Stage
from ..geometry.transforms import DTYPE
from ..interaction.detector import InteractionSet, detect_interactions
from ..raster.masks import as_grid
from ..raster.rasterizer import render_depth, render_silhouette
from ..scene.placement import PlacedScene
from .collision import collision_loss
from .silhouette import edge_distance_field, occ_sil_loss, offscreen_penalty

logger = logging.getLogger(__name__)


def _zero() -> torch.Tensor:
    return torch.zeros((), dtype=DTYPE)


def _distance(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    # sqrt has no gradient at 0; coincident centroids contribute 0 with zero gradient
    sq = ((a - b) ** 2).sum()
    return torch.where(sq > 0, torch.sqrt(sq.clamp(min=1e-30)), torch.zeros_like(sq))


def coarse_interaction_loss(placed: PlacedScene, interactions: InteractionSet) -> torch.Tensor:
    """Sum of centroid distances over interacting (human, object) pairs."""
    loss = _zero()
    for h, o in interactions.sorted_pairs():
        human = placed.humans[h].vertices
        obj = placed.objects[o].vertices
        loss = loss + _distance(human.mean(dim=0), obj.mean(dim=0))
    return loss


def fine_interaction_loss(placed: PlacedScene, interactions: InteractionSet) -> torch.Tensor:
    """Sum of part-centroid distances over active part pairs."""
    loss = _zero()
    for h, human_part, o, obj_part in interactions.sorted_part_pairs():
        p_human = placed.humans[h].part_vertices(human_part)
        p_obj = placed.objects[o].part_vertices(obj_part)
        loss = loss + _distance(p_human.mean(dim=0), p_obj.mean(dim=0))
    return loss


def scale_loss(placed: PlacedScene, stats: CategoryStats) -> torch.Tensor:
    """sum |s_j - mean_c| over objects plus w * sum |s_i - 1| over humans."""
    loss = _zero()
    for obj in placed.objects:
        loss = loss + (obj.scale - stats.mean_for(obj.category)).abs()
    for human in placed.humans:
        loss = loss + stats.human_variance_weight * (human.scale - stats.human_mean).abs()
    return loss


def depth_ranking_term(front_depth: torch.Tensor, back_depth: torch.Tensor) -> torch.Tensor:
    """log(1 + exp(D_front - D_back)) for a pixel where ``front`` should be in front."""
    return F.softplus(front_depth - back_depth)


def segmentation_labels(masks: Sequence) -> torch.Tensor:
    """Per-pixel instance id from possibly overlapping masks, -1 where none is set.

    Overlaps go to the lowest instance id.
    """
    stack = torch.stack([as_grid(m) > 0.5 for m in masks])
    # argmax of a bool stack returns the first True
    labels = stack.to(DTYPE).argmax(dim=0)
    return torch.where(stack.any(dim=0), labels, torch.full_like(labels, -1))


def ordinal_depth_loss(
    depths: Sequence[torch.Tensor], silhouettes: Sequence[torch.Tensor], masks: Sequence
) -> torch.Tensor:
    """Ranking penalty at pixels where segmentation and rendered depth order disagree.

    For instances i != j, pixel p counts when both rendered silhouettes cover it,
    the segmentation assigns it to j, and D_i(p) < D_j(p). Each counted pixel
    adds log(1 + exp(D_j - D_i)); the sum is divided by the pixel count.
    """
    if len(depths) < 2:
        return _zero()
    labels = segmentation_labels(masks)
    covered = [s.detach() >= 0.5 for s in silhouettes]
    loss = _zero()
    for j in range(len(depths)):
        owned = labels == j
        if not bool(owned.any()):
            continue
        for i in range(len(depths)):
            if i == j:
                continue
            d_i, d_j = depths[i], depths[j]
            violating = (
                owned & covered[i] & covered[j]
                & torch.isfinite(d_i.detach()) & torch.isfinite(d_j.detach())
                & (d_i.detach() < d_j.detach())
            )
            if bool(violating.any()):
                loss = loss + depth_ranking_term(d_j[violating], d_i[violating]).sum()
    return loss / labels.numel()


@dataclass
class LossBreakdown:
    """Unweighted terms and the weighted total of one evaluation.

    ``occ_sil`` already carries the offscreen penalty of every masked object,
    scaled by ``offscreen_weight``; the log keeps the fixed column set, so
    L_occ_sil is silhouette plus offscreen.
    """
    occ_sil: torch.Tensor
    coarse: torch.Tensor
    fine: torch.Tensor
    scale: torch.Tensor
    depth: torch.Tensor
    collision: torch.Tensor
    total: torch.Tensor

    CSV_HEADER = ["iter", "L_occ_sil", "L_coarse", "L_fine", "L_scale", "L_depth", "L_collision", "total"]

    def as_row(self, iteration: int) -> List:
        return [iteration] + [float(getattr(self, f.name).detach()) for f in fields(self)]

    def as_dict(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


def total_loss(
    placed: PlacedScene,
    weights: LossWeights,
    stage: Stage = Stage.JOINT,
    stats: Optional[CategoryStats] = None,
    table: Optional[Mapping[str, CategoryConfig]] = None,
    interactions: Optional[InteractionSet] = None,
    edge_fields: Optional[Mapping[int, Optional[torch.Tensor]]] = None,
) -> LossBreakdown:
    """Weighted objective over a placed scene.

    Silhouette terms cover objects carrying a mask; the chamfer term only runs
    in the fit stage. Terms with zero weight are not evaluated.
    """
    cam = placed.camera
    terms = {name: _zero() for name in ("occ_sil", "coarse", "fine", "scale", "depth", "collision")}
    chamfer = stage == Stage.FIT and weights.chamfer_enabled

    if weights.occ_sil > 0:
        for obj in placed.objects:
            if obj.mask is None:
                continue
            silhouette = render_silhouette(obj.vertices, obj.faces, cam)
            indicator = obj.indicator if obj.indicator is not None else torch.ones_like(silhouette)
            edge_dt = None
            if chamfer:
                if edge_fields is not None and obj.index in edge_fields:
                    edge_dt = edge_fields[obj.index]
                else:
                    edge_dt = edge_distance_field(obj.mask)
            terms["occ_sil"] = terms["occ_sil"] + occ_sil_loss(silhouette, obj.mask, indicator, chamfer, edge_dt)
            # offscreen is logged inside L_occ_sil
            if weights.offscreen_weight > 0:
                terms["occ_sil"] = terms["occ_sil"] + weights.offscreen_weight * offscreen_penalty(obj.vertices, cam)

    if weights.interaction > 0 and placed.humans and placed.objects:
        if interactions is None:
            if table is None:
                raise ValueError("interaction term needs a category table or precomputed interactions")
            interactions = detect_interactions(placed, table)
        terms["coarse"] = coarse_interaction_loss(placed, interactions)
        terms["fine"] = fine_interaction_loss(placed, interactions)

    if weights.scale > 0:
        if stats is None:
            if table is None:
                raise ValueError("scale term needs category statistics")
            stats = CategoryStats.from_table(table)
        terms["scale"] = scale_loss(placed, stats)

    instances = placed.instances
    if weights.depth > 0 and len(instances) > 1:
        masks = [
            inst.mask if inst.mask is not None else torch.zeros(cam.height, cam.width, dtype=DTYPE)
            for inst in instances
        ]
        depths = [render_depth(inst.vertices, inst.faces, cam, differentiable=True) for inst in instances]
        with torch.no_grad():
            hard = [render_silhouette(inst.vertices, inst.faces, cam, hard=True) for inst in instances]
        terms["depth"] = ordinal_depth_loss(depths, hard, masks)

    if weights.collision > 0 and len(instances) > 1:
        terms["collision"] = collision_loss([(inst.vertices, inst.faces) for inst in instances])

    total = (
        weights.occ_sil * terms["occ_sil"]
        + weights.interaction * (terms["coarse"] + terms["fine"])
        + weights.scale * terms["scale"]
        + weights.depth * terms["depth"]
        + weights.collision * terms["collision"]
    )
    return LossBreakdown(total=total, **terms)
