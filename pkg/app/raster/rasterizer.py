"""
Software rasterizer producing soft silhouettes and depth maps.

A soft silhouette is built per connected component of the mesh. The signed
distance of a pixel is its distance to the nearest contour edge (an edge whose
two faces project with opposite orientation, or an open edge), positive where
the component's triangles cover the pixel. Coverage is sigmoid(sharpness *
signed distance) in NDC units and components combine as 1 - prod(1 - p).
Edges shared by coplanar triangles never become contours, so faces split into
several triangles render without seams.

This is not a per-triangle soft coverage. The two agree only where no
component overlaps itself in the image; where a component folds over itself,
covered pixels next to a contour edge inside its footprint still get
coverage near one half.

Only (pixel, edge) pairs inside each edge's bounding box grown by a sharpness
dependent margin are evaluated; distances are capped at that margin and each
term is offset to vanish there, so coverage stays continuous as pairs enter
or leave the band.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from ..config.settings import settings
from ..geometry.camera import Camera, project_ndc
from ..geometry.transforms import DTYPE, as_tensor

logger = logging.getLogger(__name__)

# sigmoid(-8) < 4e-4: pixels farther out than this are treated as uncovered
_MARGIN_LOGITS = 8.0
_DEGENERATE_AREA = 1e-14


@dataclass(frozen=True)
class ScreenTriangles:
    """Triangles already mapped to NDC.

    ``z`` is the per-vertex depth; with ``perspective`` set it is interpolated
    as 1/z, otherwise linearly.
    """
    xy: torch.Tensor  # (F, 3, 2)
    z: torch.Tensor  # (F, 3)
    perspective: bool = True

    @property
    def num_faces(self) -> int:
        return int(self.xy.shape[0])


@dataclass(frozen=True)
class MeshTopology:
    """Undirected edges with their adjacent faces, and connected components of faces."""
    edges: np.ndarray  # (E, 2) vertex indices
    edge_faces: np.ndarray  # (E, 2); the second face is -1 on open edges
    open_edges: np.ndarray  # (E,) boundary or non-manifold
    face_component: np.ndarray  # (F,)
    edge_component: np.ndarray  # (E,)


def mesh_topology(faces) -> MeshTopology:
    """Topology of a face array; cached on the face indices."""
    faces = np.ascontiguousarray(torch.as_tensor(faces).detach().cpu().numpy().astype(np.int64).reshape(-1, 3))
    return _topology(faces.tobytes())


@lru_cache(maxsize=256)
def _topology(key: bytes) -> MeshTopology:
    faces = np.frombuffer(key, dtype=np.int64).reshape(-1, 3)
    n_faces = len(faces)
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    owner = np.tile(np.arange(n_faces), 3)
    edges, inverse, counts = np.unique(np.sort(directed, axis=1), axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    order = np.argsort(inverse, kind="stable")
    starts = np.cumsum(counts) - counts
    first = owner[order[starts]]
    second = np.where(counts >= 2, owner[order[np.minimum(starts + 1, len(order) - 1)]], -1)

    n_vertices = int(faces.max()) + 1
    graph = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n_vertices, n_vertices))
    _, labels = connected_components(graph, directed=False)
    _, face_component = np.unique(labels[faces[:, 0]], return_inverse=True)
    face_component = face_component.reshape(-1)
    return MeshTopology(
        edges=edges,
        edge_faces=np.stack([first, second], axis=1),
        open_edges=counts != 2,
        face_component=face_component,
        edge_component=face_component[first],
    )


@dataclass
class _PixelPairs:
    face: torch.Tensor
    pixel: torch.Tensor
    signed_distance: torch.Tensor
    edge_cross: torch.Tensor
    area2: torch.Tensor


def project_vertices(
    vertices: torch.Tensor, cam: Camera, near_plane: Optional[float] = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Perspective-project vertices to NDC, clamping those in front of the near plane."""
    near = settings.near_plane if near_plane is None else near_plane
    vertices = as_tensor(vertices)
    if vertices.shape[0] and bool((vertices[:, 2] < near).any()):
        count = int((vertices[:, 2] < near).sum())
        logger.warning(f"{count} vertices behind the near plane, clamped to z={near}")
        vertices = torch.cat([vertices[:, :2], vertices[:, 2:].clamp(min=near)], dim=1)
    return project_ndc(vertices, cam.f)


def project_faces(
    vertices: torch.Tensor, faces: torch.Tensor, cam: Camera, near_plane: Optional[float] = None
) -> ScreenTriangles:
    uv, z = project_vertices(vertices, cam, near_plane)
    faces = torch.as_tensor(faces, dtype=torch.long).reshape(-1, 3)
    return ScreenTriangles(xy=uv[faces], z=z[faces], perspective=True)


def _window_pixels(
    lo: torch.Tensor, hi: torch.Tensor, cam: Camera, margin: float, valid: Optional[torch.Tensor] = None
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(item, px, py) for every pixel center inside each item's NDC box grown by ``margin``."""
    half = cam.long_side / 2.0
    offset = torch.tensor([cam.width / 2.0, cam.height / 2.0], dtype=DTYPE)
    big = float(4 * cam.long_side)
    lo = (lo * half + offset - margin * half).clamp(-big, big)
    hi = (hi * half + offset + margin * half).clamp(-big, big)
    x0 = torch.ceil(lo[:, 0] - 0.5).long().clamp(min=0)
    x1 = torch.floor(hi[:, 0] - 0.5).long().clamp(max=cam.width - 1)
    y0 = torch.ceil(lo[:, 1] - 0.5).long().clamp(min=0)
    y1 = torch.floor(hi[:, 1] - 0.5).long().clamp(max=cam.height - 1)
    nx = (x1 - x0 + 1).clamp(min=0)
    ny = (y1 - y0 + 1).clamp(min=0)
    counts = nx * ny
    if valid is not None:
        counts = torch.where(valid, counts, torch.zeros_like(counts))

    item = torch.repeat_interleave(torch.arange(lo.shape[0]), counts)
    starts = torch.cumsum(counts, 0) - counts
    local = torch.arange(item.shape[0]) - torch.repeat_interleave(starts, counts)
    width = nx[item].clamp(min=1)
    return item, x0[item] + local % width, y0[item] + local // width


def _pixel_points(px: torch.Tensor, py: torch.Tensor, cam: Camera) -> torch.Tensor:
    half = cam.long_side / 2.0
    return torch.stack(
        [(px.to(DTYPE) + 0.5 - cam.width / 2.0) / half, (py.to(DTYPE) + 0.5 - cam.height / 2.0) / half], dim=-1
    )


def _pixel_pairs(xy: torch.Tensor, cam: Camera) -> _PixelPairs:
    """(face, pixel) pairs of pixel centers inside each face's bounding box."""
    xy_detached = xy.detach()
    area2 = _cross2(xy_detached[:, 1] - xy_detached[:, 0], xy_detached[:, 2] - xy_detached[:, 0])
    valid = area2.abs() > _DEGENERATE_AREA
    face, px, py = _window_pixels(xy_detached.min(dim=1).values, xy_detached.max(dim=1).values, cam, 0.0, valid)

    points = _pixel_points(px, py, cam)
    v0 = xy[face]
    v1 = v0.roll(-1, dims=1)
    edges = v1 - v0
    rel = points.unsqueeze(1) - v0
    cross = _cross2(edges, rel)
    edge_sq = (edges * edges).sum(-1).clamp(min=1e-30)
    orient = torch.sign(area2[face]).unsqueeze(1)
    line = orient * cross / torch.sqrt(edge_sq)
    inside = (line >= 0).all(dim=-1)
    t = ((rel * edges).sum(-1) / edge_sq).clamp(0.0, 1.0)
    diff = rel - t.unsqueeze(-1) * edges
    seg = torch.sqrt((diff * diff).sum(-1).clamp(min=1e-30))
    signed = torch.where(inside, line.min(dim=-1).values, -seg.min(dim=-1).values)

    area2_grad = _cross2(xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0])
    return _PixelPairs(
        face=face,
        pixel=py * cam.width + px,
        signed_distance=signed,
        edge_cross=cross,
        area2=area2_grad[face],
    )


def _cross2(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segment_distance(points: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    ab = b - a
    ap = points - a
    t = ((ap * ab).sum(-1) / (ab * ab).sum(-1).clamp(min=1e-30)).clamp(0.0, 1.0)
    diff = ap - t.unsqueeze(-1) * ab
    return torch.sqrt((diff * diff).sum(-1).clamp(min=1e-30))


def _hard_coverage(xy: torch.Tensor, cam: Camera) -> _PixelPairs:
    with torch.no_grad():
        pairs = _pixel_pairs(xy.detach(), cam)
        hit = pairs.signed_distance >= 0
        return _PixelPairs(
            face=pairs.face[hit],
            pixel=pairs.pixel[hit],
            signed_distance=pairs.signed_distance[hit],
            edge_cross=pairs.edge_cross[hit],
            area2=pairs.area2[hit],
        )


def rasterize_silhouette(
    uv: torch.Tensor, faces: torch.Tensor, cam: Camera, sharpness: Optional[float] = None, hard: bool = False
) -> torch.Tensor:
    """Coverage image of shape (H, W) with values in [0, 1] from NDC vertices ``uv``.

    Soft coverage is computed per connected component from contour distances
    and combined across components as 1 - prod(1 - p); it matches a
    per-triangle soft coverage only where components do not self-overlap.
    ``hard`` returns plain triangle coverage.
    """
    sharpness = settings.sharpness if sharpness is None else sharpness
    n_pixels = cam.width * cam.height
    faces = torch.as_tensor(faces, dtype=torch.long).reshape(-1, 3)
    if faces.shape[0] == 0:
        return torch.zeros(cam.height, cam.width, dtype=DTYPE)

    xy = uv[faces]
    covered = _hard_coverage(xy, cam)
    if hard:
        image = torch.zeros(n_pixels, dtype=torch.bool)
        image[covered.pixel] = True
        return image.to(DTYPE).reshape(cam.height, cam.width)

    topo = mesh_topology(faces)
    with torch.no_grad():
        area2 = _cross2(xy[:, 1] - xy[:, 0], xy[:, 2] - xy[:, 0]).detach().numpy()
    front = area2 > 0
    first, second = topo.edge_faces[:, 0], topo.edge_faces[:, 1]
    contour = topo.open_edges | (front[first] != front[np.maximum(second, 0)])
    edges = torch.as_tensor(topo.edges[contour])
    edge_component = torch.as_tensor(topo.edge_component[contour])

    margin = _MARGIN_LOGITS / sharpness
    a = uv[edges[:, 0]]
    b = uv[edges[:, 1]]
    lo = torch.minimum(a, b).detach()
    hi = torch.maximum(a, b).detach()
    item, px, py = _window_pixels(lo, hi, cam, margin)
    distance = _segment_distance(_pixel_points(px, py, cam), a[item], b[item])

    # one slot per (component, pixel); covered slots without a nearby contour sit at the margin
    face_component = torch.as_tensor(topo.face_component)
    edge_keys = edge_component[item] * n_pixels + py * cam.width + px
    covered_keys = face_component[covered.face] * n_pixels + covered.pixel
    keys, inverse = torch.unique(torch.cat([edge_keys, covered_keys]), return_inverse=True)
    n_edge_pairs = edge_keys.shape[0]
    nearest = torch.full((keys.shape[0],), margin, dtype=DTYPE).scatter_reduce(
        0, inverse[:n_edge_pairs], distance, reduce="amin", include_self=True
    )
    inside = torch.zeros(keys.shape[0], dtype=torch.bool)
    inside[inverse[n_edge_pairs:]] = True
    signed = torch.where(inside, nearest, -nearest)

    floor = F.logsigmoid(torch.tensor(_MARGIN_LOGITS, dtype=DTYPE))
    terms = (F.logsigmoid(-sharpness * signed) - floor).clamp(max=0.0)
    log_uncovered = torch.zeros(n_pixels, dtype=DTYPE).index_add(0, keys % n_pixels, terms)
    return (1.0 - torch.exp(log_uncovered)).reshape(cam.height, cam.width)


def rasterize_depth(tris: ScreenTriangles, cam: Camera) -> torch.Tensor:
    """Per-pixel depth of the frontmost covering triangle, +inf where uncovered.

    Differentiable with respect to the depth of the winning triangle.
    """
    n_pixels = cam.width * cam.height
    depth = torch.full((n_pixels,), float("inf"), dtype=DTYPE)
    if tris.num_faces == 0:
        return depth.reshape(cam.height, cam.width)

    pairs = _pixel_pairs(tris.xy, cam)
    inside = pairs.signed_distance.detach() >= 0
    if not bool(inside.any()):
        return depth.reshape(cam.height, cam.width)

    # cross of edge i is twice the area opposite vertex i + 2
    bary = pairs.edge_cross[inside].roll(-1, dims=-1) / pairs.area2[inside].unsqueeze(-1)
    z = tris.z[pairs.face[inside]]
    if tris.perspective:
        values = 1.0 / (bary / z).sum(-1)
    else:
        values = (bary * z).sum(-1)
    depth = depth.scatter_reduce(0, pairs.pixel[inside], values, reduce="amin", include_self=True)
    return depth.reshape(cam.height, cam.width)


def render_silhouette(
    vertices: torch.Tensor,
    faces: torch.Tensor,
    cam: Camera,
    sharpness: Optional[float] = None,
    hard: bool = False,
    near_plane: Optional[float] = None,
) -> torch.Tensor:
    """Soft (or hard) silhouette of a world-frame mesh seen by ``cam``."""
    uv, _ = project_vertices(vertices, cam, near_plane)
    return rasterize_silhouette(uv, faces, cam, sharpness, hard)


def render_depth(
    vertices: torch.Tensor,
    faces: torch.Tensor,
    cam: Camera,
    differentiable: bool = False,
    near_plane: Optional[float] = None,
) -> torch.Tensor:
    """Z-buffer depth map; detached unless ``differentiable``."""
    if differentiable:
        return rasterize_depth(project_faces(vertices, faces, cam, near_plane), cam)
    with torch.no_grad():
        return rasterize_depth(project_faces(vertices, faces, cam, near_plane), cam)


def composite(depths: Sequence[torch.Tensor]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Front-most instance id (-1 for background) and depth from per-instance depth maps."""
    if not depths:
        raise ValueError("composite needs at least one depth map")
    stack = torch.stack([d.detach() for d in depths])
    nearest, ids = stack.min(dim=0)
    ids = torch.where(torch.isfinite(nearest), ids, torch.full_like(ids, -1))
    return ids, nearest


def render_instance_ids(
    meshes: Sequence[Tuple[torch.Tensor, torch.Tensor]], cam: Camera
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Modal segmentation of several world-frame meshes: (ids, depth)."""
    if not meshes:
        empty = torch.full((cam.height, cam.width), -1, dtype=torch.long)
        return empty, torch.full((cam.height, cam.width), float("inf"), dtype=DTYPE)
    depths: List[torch.Tensor] = [render_depth(v, f, cam) for v, f in meshes]
    return composite(depths)
