"""
Per-object 6-DoF pose fitting against an instance mask.

Every restart rotation is scored at a low resolution with a shared initial
translation; the best candidates are refined with Adam over the 6D rotation
and translation at the working resolution and the best iterate seen wins.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from ..config.categories import RestartBias
from ..config.schedules import FitSchedule, LossWeights
from ..config.settings import settings
from ..errors import InvalidParameterError, NumericalFailureError
from ..geometry.camera import Camera
from ..geometry.mesh import TriMesh
from ..geometry.transforms import DTYPE, matrix_to_6d, object_to_world, rot6d_to_matrix
from ..losses.silhouette import edge_distance_field, occ_sil_loss, offscreen_penalty
from ..raster.masks import as_grid, downsample_mask, mask_bbox
from ..raster.rasterizer import render_silhouette
from .adam import AdamState, adam_step
from .rotations import sample_rotations

logger = logging.getLogger(__name__)


@dataclass
class FitResult:
    """Fitted pose of one object; world = scale * (R V + translation)."""
    exemplar: int
    rotation: np.ndarray
    translation: np.ndarray
    loss: float
    scale: float = 1.0
    restart_losses: np.ndarray = field(default_factory=lambda: np.zeros(0))
    refined_initial_losses: List[float] = field(default_factory=list)

    @property
    def world_translation(self) -> np.ndarray:
        return self.scale * self.translation


def init_translation(mask, cam: Camera, mesh: TriMesh, mean_scale: float = 1.0) -> np.ndarray:
    """World-frame position on the mask centroid ray.

    The depth makes the mean-scaled mesh diameter project to the diagonal of
    the mask's bounding box.
    """
    grid = as_grid(mask).detach().numpy() > 0.5
    box = mask_bbox(grid)
    if box is None:
        raise InvalidParameterError("cannot initialize a translation from an empty mask")
    height, width = grid.shape
    if (width, height) != (cam.width, cam.height):
        cam = Camera(width=width, height=height, f=cam.f)
    half = cam.long_side / 2.0

    x0, y0, x1, y1 = box
    diagonal = np.hypot(x1 - x0 + 1, y1 - y0 + 1) / half
    ys, xs = np.nonzero(grid)
    u, v = cam.pixel_to_ndc(torch.tensor([xs.mean() + 0.5, ys.mean() + 0.5], dtype=DTYPE)).tolist()

    depth = cam.f * mean_scale * mesh.diameter() / diagonal
    return depth * np.array([u / cam.f, v / cam.f, 1.0])


class _SilhouetteObjective:
    """occ-sil plus offscreen penalty of one mesh against one mask at one resolution."""

    def __init__(self, mesh: TriMesh, mask, indicator, cam: Camera, weights: LossWeights, scale: float):
        self.cam = cam
        self.vertices = mesh.torch_vertices()
        self.faces = mesh.torch_faces()
        self.mask = downsample_mask(mask, cam.width, cam.height)
        self.indicator = downsample_mask(indicator, cam.width, cam.height)
        self.weights = weights
        self.scale = torch.tensor(scale, dtype=DTYPE)
        self.edge_dt = edge_distance_field(self.mask) if weights.chamfer_enabled else None

    def __call__(self, rotation: torch.Tensor, translation: torch.Tensor) -> torch.Tensor:
        world = object_to_world(self.vertices, rotation, translation, self.scale)
        silhouette = render_silhouette(world, self.faces, self.cam)
        loss = occ_sil_loss(silhouette, self.mask, self.indicator, self.weights.chamfer_enabled, self.edge_dt)
        if self.weights.offscreen_weight > 0:
            loss = loss + self.weights.offscreen_weight * offscreen_penalty(world, self.cam)
        return loss


def _score(objective: _SilhouetteObjective, rotations: np.ndarray, translation: torch.Tensor) -> List[float]:
    with torch.no_grad():
        return [float(objective(torch.as_tensor(r, dtype=DTYPE), translation)) for r in rotations]


def _refine(objective: _SilhouetteObjective, rotation: np.ndarray, translation: np.ndarray, schedule: FitSchedule):
    """Adam over (6D rotation, translation); returns (initial loss, best loss, best rot6d, best t)."""
    params = {
        "rot6d": matrix_to_6d(rotation).clone(),
        "translation": torch.as_tensor(translation, dtype=DTYPE).clone(),
    }
    state = AdamState(lr=schedule.lr)
    losses = []
    best = (float("inf"), params["rot6d"], params["translation"])
    for step in range(schedule.iterations + 1):
        leaves = {k: v.detach().requires_grad_(True) for k, v in params.items()}
        loss = objective(rot6d_to_matrix(leaves["rot6d"]), leaves["translation"])
        value = float(loss.detach())
        losses.append(value)
        if np.isfinite(value) and value < best[0]:
            best = (value, leaves["rot6d"].detach().clone(), leaves["translation"].detach().clone())
        # the last pass only scores the final update
        if step == schedule.iterations:
            break
        grads = torch.autograd.grad(loss, list(leaves.values()), allow_unused=True)
        params = adam_step(state, leaves, dict(zip(leaves.keys(), grads)))
    return losses[0], best[0], best[1], best[2]


def fit_object_pose(
    mesh: TriMesh,
    mask,
    indicator,
    cam: Camera,
    schedule: Optional[FitSchedule] = None,
    bias: RestartBias = RestartBias.NONE,
    mean_scale: float = 1.0,
    seed: int = 0,
    jobs: Optional[int] = None,
    weights: Optional[LossWeights] = None,
    rotations: Optional[np.ndarray] = None,
    resolution: Optional[int] = None,
) -> Optional[FitResult]:
    """Fit rotation and translation of ``mesh`` to ``mask``; None for an empty mask.

    ``rotations`` replaces the sampled restarts when given.
    """
    schedule = schedule or FitSchedule.fit_defaults()
    weights = weights or LossWeights()
    jobs = jobs or settings.jobs
    grid = as_grid(mask)
    if not bool((grid > 0.5).any()):
        logger.warning(f"Empty mask for mesh '{mesh.name}', instance skipped")
        return None
    if indicator is None:
        indicator = torch.ones_like(grid)

    working = cam.resized(resolution or settings.resolution)
    scoring = cam.resized(schedule.score_resolution)
    translation = init_translation(grid, cam, mesh, mean_scale) / mean_scale
    if rotations is None:
        rotations = sample_rotations(schedule.restarts, bias, seed)
    rotations = np.asarray(rotations, dtype=np.float64).reshape(-1, 3, 3)

    score_objective = _SilhouetteObjective(mesh, grid, indicator, scoring, weights, mean_scale)
    t0 = torch.as_tensor(translation, dtype=DTYPE)
    chunks = np.array_split(rotations, max(1, min(jobs, len(rotations))))
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        scored = list(pool.map(lambda c: _score(score_objective, c, t0), chunks))
    restart_losses = np.array([v for chunk in scored for v in chunk], dtype=np.float64)
    restart_losses = np.where(np.isfinite(restart_losses), restart_losses, np.inf)
    logger.debug(f"Scored {len(rotations)} restarts for '{mesh.name}', best {restart_losses.min():.5f}")

    keep = min(schedule.restarts_refined, len(rotations))
    candidates = np.argsort(restart_losses, kind="stable")[:keep]
    objective = _SilhouetteObjective(mesh, grid, indicator, working, weights, mean_scale)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        refined = list(pool.map(lambda k: _refine(objective, rotations[k], translation, schedule), candidates))

    best = None
    for initial, loss, rot6d, t in refined:
        if np.isfinite(loss) and (best is None or loss < best[0]):
            best = (loss, rot6d, t)
    if best is None:
        raise NumericalFailureError(f"pose fit of '{mesh.name}' produced no finite loss")

    return FitResult(
        exemplar=0,
        rotation=rot6d_to_matrix(best[1]).numpy(),
        translation=best[2].numpy(),
        loss=best[0],
        scale=mean_scale,
        restart_losses=restart_losses,
        refined_initial_losses=[r[0] for r in refined],
    )


def select_exemplar(
    meshes: Sequence[TriMesh],
    mask,
    indicator,
    cam: Camera,
    schedule: Optional[FitSchedule] = None,
    bias: RestartBias = RestartBias.NONE,
    mean_scale: float = 1.0,
    seed: int = 0,
    jobs: Optional[int] = None,
    weights: Optional[LossWeights] = None,
    rotations: Optional[np.ndarray] = None,
    resolution: Optional[int] = None,
) -> Optional[FitResult]:
    """Fit every exemplar and keep the lowest loss; ties go to the lowest index."""
    if not meshes:
        raise InvalidParameterError("select_exemplar needs at least one exemplar mesh")
    best: Optional[FitResult] = None
    for k, mesh in enumerate(meshes):
        result = fit_object_pose(
            mesh, mask, indicator, cam, schedule, bias, mean_scale, seed, jobs, weights, rotations, resolution
        )
        if result is None:
            return None
        result.exemplar = k
        logger.debug(f"Exemplar {k} ('{mesh.name}') loss {result.loss:.5f}")
        if best is None or result.loss < best.loss:
            best = result
    return best
