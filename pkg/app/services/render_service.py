"""
Flat-shaded renders of an arranged scene from the front, top and side.
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from PIL import Image

from ..config.settings import settings
from ..geometry.camera import Camera
from ..raster.rasterizer import ScreenTriangles, composite, project_faces, rasterize_depth
from ..scene.models import Scene
from ..scene.placement import place_human, place_object

logger = logging.getLogger(__name__)

VIEWS = ("front", "top", "side")
BACKGROUND = (255, 255, 255)
PALETTE = [
    (251, 128, 114),
    (166, 189, 219),
    (141, 211, 199),
    (190, 186, 218),
    (253, 180, 98),
    (179, 222, 105),
    (252, 205, 229),
    (188, 128, 189),
]


def _world_meshes(scene: Scene) -> List[Tuple[torch.Tensor, torch.Tensor]]:
    meshes = [(torch.as_tensor(place_human(h, scene.camera)), h.mesh.torch_faces()) for h in scene.humans]
    meshes += [(torch.as_tensor(place_object(o, scene.library)), scene.mesh_for(o).torch_faces()) for o in scene.objects]
    return meshes


def _orthographic(meshes, view: str, cam: Camera) -> List[ScreenTriangles]:
    """Orthographic screen triangles fitting every mesh into the image.

    Top view looks down (+y); far objects appear higher in the image.
    Side view looks from +x toward -x; depth grows to the right.
    """
    points = torch.cat([v for v, _ in meshes])
    lo = points.min(dim=0).values
    hi = points.max(dim=0).values
    center = (lo + hi) / 2.0
    half = float((hi - lo).max()) / 2.0 * 1.1 or 1.0
    extent_u, extent_v = cam.ndc_extent
    half = half / min(extent_u, extent_v)

    result = []
    for vertices, faces in meshes:
        rel = (vertices - center) / half
        if view == "top":
            xy = torch.stack([rel[:, 0], -rel[:, 2]], dim=-1)
            depth = vertices[:, 1] - lo[1] + 1.0
        else:
            xy = torch.stack([rel[:, 2], rel[:, 1]], dim=-1)
            depth = hi[0] - vertices[:, 0] + 1.0
        result.append(ScreenTriangles(xy=xy[faces], z=depth[faces], perspective=False))
    return result


def render_ids(scene: Scene, view: str, resolution: Optional[int] = None) -> torch.Tensor:
    """(H, W) instance ids of the frontmost surface, -1 for background."""
    if view not in VIEWS:
        raise ValueError(f"unknown view '{view}', expected one of {VIEWS}")
    long_side = resolution or settings.resolution
    cam = scene.camera.resized(long_side) if view == "front" else Camera(long_side, long_side, scene.camera.f)
    meshes = _world_meshes(scene)
    if not meshes:
        return torch.full((cam.height, cam.width), -1, dtype=torch.long)

    with torch.no_grad():
        if view == "front":
            tris = [project_faces(v, f, cam) for v, f in meshes]
        else:
            tris = _orthographic(meshes, view, cam)
        ids, _ = composite([rasterize_depth(t, cam) for t in tris])
    return ids


def colorize(ids: torch.Tensor, palette: Sequence[Tuple[int, int, int]] = PALETTE) -> np.ndarray:
    """RGB image with one flat color per instance id."""
    ids = ids.numpy()
    image = np.empty(ids.shape + (3,), dtype=np.uint8)
    image[:] = BACKGROUND
    for k in np.unique(ids[ids >= 0]):
        image[ids == k] = palette[int(k) % len(palette)]
    return image


def render_views(
    scene: Scene,
    out_dir: Union[str, Path],
    views: Sequence[str] = VIEWS,
    resolution: Optional[int] = None,
) -> Dict[str, Path]:
    """Write ``view_{name}.png`` for each requested view."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for view in views:
        path = out_dir / f"view_{view}.png"
        Image.fromarray(colorize(render_ids(scene, view, resolution)), mode="RGB").save(path)
        written[view] = path
    logger.info(f"Rendered {', '.join(views)} view(s) to {out_dir}")
    return written
