"""
Interpenetration detection and penalty between instance meshes.

Triangle pairs are found with an AABB tree per mesh. For every unordered
instance pair with at least one intersecting triangle pair, points of one
mesh that lie inside the other (winding number) or within a reach of its
surface pay (depth + reach)^2, summed and divided by the intruding mesh's
vertex count.

By default the points are the vertices plus a barycentric grid on every
intersecting triangle, and the reach is the tolerance plus a contact margin
of two grid spacings, so the penalty keeps a usable slope until no triangle
pair intersects. With ``samples=0`` only vertices pay with reach equal to the
tolerance; when none qualifies, points sampled along the edges that pierce
the other mesh stand in for them.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn.functional as F

from ..config.settings import settings
from ..geometry.transforms import DTYPE

logger = logging.getLogger(__name__)

_EPS = 1e-12
_EDGE_SAMPLES = 8
_CHUNK = 256


@dataclass
class BvhNode:
    """Node of an axis-aligned bounding box tree over triangles."""
    lo: np.ndarray
    hi: np.ndarray
    left: Optional["BvhNode"] = None
    right: Optional["BvhNode"] = None
    triangles: Optional[np.ndarray] = None

    @property
    def is_leaf(self) -> bool:
        return self.triangles is not None

    def volume(self) -> float:
        return float(np.prod(self.hi - self.lo))


def build_bvh(triangles: np.ndarray, leaf_size: int = 8) -> Optional[BvhNode]:
    """Median split along the longest axis of the triangle centroids."""
    if len(triangles) == 0:
        return None
    lo_all = triangles.min(axis=1)
    hi_all = triangles.max(axis=1)
    centroids = triangles.mean(axis=1)

    def build(indices: np.ndarray) -> BvhNode:
        node = BvhNode(lo=lo_all[indices].min(axis=0), hi=hi_all[indices].max(axis=0))
        if len(indices) <= leaf_size:
            node.triangles = indices
            return node
        spread = centroids[indices].max(axis=0) - centroids[indices].min(axis=0)
        axis = int(np.argmax(spread))
        order = indices[np.argsort(centroids[indices, axis], kind="stable")]
        half = len(order) // 2
        node.left = build(order[:half])
        node.right = build(order[half:])
        return node

    return build(np.arange(len(triangles)))


def _boxes_overlap(lo_a, hi_a, lo_b, hi_b, pad: float = 0.0) -> bool:
    return bool(np.all(lo_a - pad <= hi_b) and np.all(lo_b - pad <= hi_a))


def candidate_pairs(a: Optional[BvhNode], b: Optional[BvhNode], pad: float = 0.0) -> np.ndarray:
    """Triangle index pairs whose bounding boxes overlap."""
    if a is None or b is None:
        return np.zeros((0, 2), dtype=np.int64)
    found: List[np.ndarray] = []
    stack = [(a, b)]
    while stack:
        na, nb = stack.pop()
        if not _boxes_overlap(na.lo, na.hi, nb.lo, nb.hi, pad):
            continue
        if na.is_leaf and nb.is_leaf:
            grid = np.stack(np.meshgrid(na.triangles, nb.triangles, indexing="ij"), axis=-1)
            found.append(grid.reshape(-1, 2))
        elif na.is_leaf or (not nb.is_leaf and nb.volume() > na.volume()):
            stack.append((na, nb.right))
            stack.append((na, nb.left))
        else:
            stack.append((na.right, nb))
            stack.append((na.left, nb))
    if not found:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(found)


def segment_triangle_hits(q0: np.ndarray, q1: np.ndarray, tris: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Segment q0->q1 against triangles, all batched along the first axis.

    Returns (hit, t) with t the segment parameter of the crossing. Segments
    parallel to the triangle plane never hit; the coplanar test covers them.
    """
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    d = q1 - q0
    h = np.cross(d, e2)
    a = np.einsum("ij,ij->i", e1, h)
    scale = np.linalg.norm(d, axis=1) * np.linalg.norm(e1, axis=1) * np.linalg.norm(e2, axis=1)
    usable = np.abs(a) > 1e-12 * np.maximum(scale, _EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(usable, 1.0 / np.where(usable, a, 1.0), 0.0)
        s = q0 - tris[:, 0]
        u = f * np.einsum("ij,ij->i", s, h)
        q = np.cross(s, e1)
        v = f * np.einsum("ij,ij->i", d, q)
        t = f * np.einsum("ij,ij->i", e2, q)
    tol = 1e-12
    hit = usable & (u >= -tol) & (v >= -tol) & (u + v <= 1 + tol) & (t >= -tol) & (t <= 1 + tol)
    return hit, t


def _edges_cross(tri_a: np.ndarray, tri_b: np.ndarray) -> np.ndarray:
    hits = np.zeros(len(tri_a), dtype=bool)
    for i in range(3):
        hit, _ = segment_triangle_hits(tri_a[:, i], tri_a[:, (i + 1) % 3], tri_b)
        hits |= hit
    return hits


def _cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _segments_intersect_2d(p0, p1, q0, q1) -> np.ndarray:
    r = p1 - p0
    s = q1 - q0
    denom = _cross2(r, s)
    qp = q0 - p0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = _cross2(qp, s) / denom
        u = _cross2(qp, r) / denom
    proper = (np.abs(denom) > _EPS) & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    # Collinear overlapping segments
    collinear = (np.abs(denom) <= _EPS) & (np.abs(_cross2(qp, r)) <= _EPS)
    rr = np.maximum((r * r).sum(-1), _EPS)
    t0 = (qp * r).sum(-1) / rr
    t1 = t0 + (s * r).sum(-1) / rr
    overlap = collinear & (np.maximum(t0, t1) >= 0) & (np.minimum(t0, t1) <= 1)
    return proper | overlap


def _point_in_triangle_2d(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    d0 = _cross2(tri[:, 1] - tri[:, 0], p - tri[:, 0])
    d1 = _cross2(tri[:, 2] - tri[:, 1], p - tri[:, 1])
    d2 = _cross2(tri[:, 0] - tri[:, 2], p - tri[:, 2])
    tol = 1e-12
    return ((d0 >= -tol) & (d1 >= -tol) & (d2 >= -tol)) | ((d0 <= tol) & (d1 <= tol) & (d2 <= tol))


def _coplanar_overlap(t1: np.ndarray, t2: np.ndarray, normals: np.ndarray) -> np.ndarray:
    drop = np.argmax(np.abs(normals), axis=1)
    keep = np.array([[1, 2], [0, 2], [0, 1]])[drop]
    rows = np.arange(len(t1))[:, None, None]
    a = t1[rows, np.arange(3)[None, :, None], keep[:, None, :]]
    b = t2[rows, np.arange(3)[None, :, None], keep[:, None, :]]
    hits = np.zeros(len(t1), dtype=bool)
    for i in range(3):
        for j in range(3):
            hits |= _segments_intersect_2d(a[:, i], a[:, (i + 1) % 3], b[:, j], b[:, (j + 1) % 3])
    for i in range(3):
        hits |= _point_in_triangle_2d(a[:, i], b) | _point_in_triangle_2d(b[:, i], a)
    return hits


def triangles_intersect(t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    """Pairwise triangle/triangle intersection, touching included."""
    if len(t1) == 0:
        return np.zeros(0, dtype=bool)
    hits = _edges_cross(t1, t2) | _edges_cross(t2, t1)

    n1 = np.cross(t1[:, 1] - t1[:, 0], t1[:, 2] - t1[:, 0])
    n2 = np.cross(t2[:, 1] - t2[:, 0], t2[:, 2] - t2[:, 0])
    l1 = np.linalg.norm(n1, axis=1)
    l2 = np.linalg.norm(n2, axis=1)
    ok = (l1 > _EPS) & (l2 > _EPS)
    u1 = n1 / np.maximum(l1, _EPS)[:, None]
    u2 = n2 / np.maximum(l2, _EPS)[:, None]
    parallel = np.linalg.norm(np.cross(u1, u2), axis=1) < 1e-9
    size = np.maximum(np.sqrt(l1), np.sqrt(l2))
    offsets = np.abs(np.einsum("ij,ikj->ik", u1, t2 - t1[:, :1]))
    coplanar = ok & parallel & np.all(offsets <= 1e-9 * np.maximum(size, 1.0)[:, None], axis=1)
    if coplanar.any():
        hits[coplanar] |= _coplanar_overlap(t1[coplanar], t2[coplanar], u1[coplanar])
    return hits


def intersecting_triangle_pairs(
    vertices_a: np.ndarray, faces_a: np.ndarray, vertices_b: np.ndarray, faces_b: np.ndarray
) -> np.ndarray:
    """(K, 2) face index pairs of mesh A and mesh B that intersect."""
    tris_a = np.asarray(vertices_a, dtype=np.float64)[np.asarray(faces_a)]
    tris_b = np.asarray(vertices_b, dtype=np.float64)[np.asarray(faces_b)]
    pairs = candidate_pairs(build_bvh(tris_a), build_bvh(tris_b), pad=1e-9)
    if len(pairs) == 0:
        return pairs
    hits = triangles_intersect(tris_a[pairs[:, 0]], tris_b[pairs[:, 1]])
    return pairs[hits]


def winding_numbers(points: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Generalized winding number of closed triangle soups at each point."""
    result = np.zeros(len(points))
    for start in range(0, len(points), _CHUNK):
        p = points[start:start + _CHUNK, None, None, :]
        rel = triangles[None] - p
        a, b, c = rel[..., 0, :], rel[..., 1, :], rel[..., 2, :]
        la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
        numerator = np.einsum("...i,...i->...", a, np.cross(b, c))
        denominator = (
            la * lb * lc
            + np.einsum("...i,...i->...", a, b) * lc
            + np.einsum("...i,...i->...", a, c) * lb
            + np.einsum("...i,...i->...", b, c) * la
        )
        result[start:start + _CHUNK] = np.arctan2(numerator, denominator).sum(axis=-1) / (2.0 * np.pi)
    return result


def _segment_distance(p: torch.Tensor, a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    ab = b - a
    ap = p - a
    t = ((ap * ab).sum(-1) / (ab * ab).sum(-1).clamp(min=1e-30)).clamp(0.0, 1.0)
    diff = ap - t.unsqueeze(-1) * ab
    return torch.sqrt((diff * diff).sum(-1).clamp(min=1e-30))


def point_triangle_distance(points: torch.Tensor, triangles: torch.Tensor) -> torch.Tensor:
    """Distance from each point to the nearest of the triangles, differentiable in both."""
    out = []
    for start in range(0, points.shape[0], _CHUNK):
        p = points[start:start + _CHUNK, None, :]
        a, b, c = triangles[None, :, 0], triangles[None, :, 1], triangles[None, :, 2]
        n = torch.linalg.cross(b - a, c - a, dim=-1)
        n_len = torch.sqrt((n * n).sum(-1).clamp(min=1e-30))
        plane = ((p - a) * n).sum(-1) / n_len
        side_ab = (torch.linalg.cross(b - a, p - a, dim=-1) * n).sum(-1) >= 0
        side_bc = (torch.linalg.cross(c - b, p - b, dim=-1) * n).sum(-1) >= 0
        side_ca = (torch.linalg.cross(a - c, p - c, dim=-1) * n).sum(-1) >= 0
        inside = side_ab & side_bc & side_ca
        edges = torch.stack([_segment_distance(p, a, b), _segment_distance(p, b, c), _segment_distance(p, c, a)])
        dist = torch.where(inside, plane.abs(), edges.min(dim=0).values)
        out.append(dist.min(dim=1).values)
    if not out:
        return torch.zeros(0, dtype=points.dtype)
    return torch.cat(out)


def _intrusion_penalty(points: torch.Tensor, tris_b: torch.Tensor, tolerance: float, margin: float = 0.0) -> torch.Tensor:
    """Sum of relu(signed depth + tolerance + margin)^2, depth positive inside B."""
    if points.shape[0] == 0:
        return torch.zeros((), dtype=DTYPE)
    reach = tolerance + margin
    tris_np = tris_b.detach().numpy()
    lo = tris_np.reshape(-1, 3).min(axis=0) - reach
    hi = tris_np.reshape(-1, 3).max(axis=0) + reach
    pts_np = points.detach().numpy()
    near = np.all((pts_np >= lo) & (pts_np <= hi), axis=1)
    if not near.any():
        return torch.zeros((), dtype=DTYPE)
    index = torch.as_tensor(np.flatnonzero(near))
    candidates = points[index]
    inside = torch.as_tensor(np.abs(winding_numbers(pts_np[near], tris_np)) >= 0.5)
    dist = point_triangle_distance(candidates, tris_b)
    signed = torch.where(inside, dist, -dist)
    return (F.relu(signed + reach) ** 2).sum()


def _piercing_samples(
    vertices_a: torch.Tensor, faces_a: np.ndarray, tris_b_np: np.ndarray, pairs: np.ndarray
) -> torch.Tensor:
    """Points along edges of A that cross triangles of B, including the crossing points."""
    verts_np = vertices_a.detach().numpy()
    starts, ends, params = [], [], []
    for i in range(3):
        i0 = faces_a[pairs[:, 0], i]
        i1 = faces_a[pairs[:, 0], (i + 1) % 3]
        hit, t = segment_triangle_hits(verts_np[i0], verts_np[i1], tris_b_np[pairs[:, 1]])
        starts.append(i0[hit])
        ends.append(i1[hit])
        params.append(t[hit])
    starts = np.concatenate(starts)
    ends = np.concatenate(ends)
    params = np.concatenate(params)
    if len(starts) == 0:
        return torch.zeros((0, 3), dtype=DTYPE)
    fractions = (np.arange(_EDGE_SAMPLES) + 0.5) / _EDGE_SAMPLES
    grid = np.concatenate([params[:, None], np.broadcast_to(fractions, (len(params), _EDGE_SAMPLES))], axis=1)
    s = torch.as_tensor(grid, dtype=DTYPE).unsqueeze(-1)
    v0 = vertices_a[torch.as_tensor(starts)].unsqueeze(1)
    v1 = vertices_a[torch.as_tensor(ends)].unsqueeze(1)
    return (v0 + s * (v1 - v0)).reshape(-1, 3)


def barycentric_grid(steps: int) -> np.ndarray:
    """(K, 3) barycentric weights on a regular grid with ``steps`` intervals per edge."""
    rows = [(i, j, steps - i - j) for i in range(steps + 1) for j in range(steps + 1 - i)]
    return np.asarray(rows, dtype=np.float64) / steps


def _contact_samples(vertices_a: torch.Tensor, faces_a: np.ndarray, triangles: np.ndarray, steps: int):
    """Grid points on the given triangles of A and the contact margin they need.

    Every point of a sampled triangle lies within one grid spacing of a sample,
    so a margin of two spacings keeps a sample paying a penalty with a slope of
    at least two spacings for as long as that triangle crosses the other mesh.
    """
    weights = torch.as_tensor(barycentric_grid(steps), dtype=DTYPE)
    corners = vertices_a[torch.as_tensor(faces_a[triangles], dtype=torch.long)]
    points = torch.einsum("kc,tcd->tkd", weights, corners).reshape(-1, 3)
    tris = corners.detach().numpy()
    edges = np.linalg.norm(tris - np.roll(tris, 1, axis=1), axis=-1)
    return points, 2.0 * float(edges.max()) / steps


def pair_collision_loss(
    vertices_a: torch.Tensor,
    faces_a: torch.Tensor,
    vertices_b: torch.Tensor,
    faces_b: torch.Tensor,
    tolerance: Optional[float] = None,
    samples: Optional[int] = None,
) -> torch.Tensor:
    """Symmetric penetration penalty of two meshes; 0 when no triangles intersect.

    With ``samples == 0`` only vertices pay, (depth + tolerance)^2 each, and the
    edge samples stand in when no vertex qualifies. With ``samples > 0`` grid
    points on every intersecting triangle pay as well, shifted by a contact
    margin, so the gradient stays away from zero until the meshes separate.
    """
    tau = settings.collision_tolerance if tolerance is None else tolerance
    steps = settings.collision_samples if samples is None else samples
    fa = np.asarray(faces_a)
    fb = np.asarray(faces_b)
    va_np = vertices_a.detach().numpy()
    vb_np = vertices_b.detach().numpy()
    if len(fa) == 0 or len(fb) == 0:
        return torch.zeros((), dtype=DTYPE)
    if not _boxes_overlap(va_np.min(0), va_np.max(0), vb_np.min(0), vb_np.max(0), pad=tau):
        return torch.zeros((), dtype=DTYPE)
    pairs = intersecting_triangle_pairs(va_np, fa, vb_np, fb)
    if len(pairs) == 0:
        return torch.zeros((), dtype=DTYPE)

    tris_a = vertices_a[torch.as_tensor(fa, dtype=torch.long)]
    tris_b = vertices_b[torch.as_tensor(fb, dtype=torch.long)]
    if steps > 0:
        points_a, margin_a = _contact_samples(vertices_a, fa, np.unique(pairs[:, 0]), steps)
        points_b, margin_b = _contact_samples(vertices_b, fb, np.unique(pairs[:, 1]), steps)
        return (
            (
                _intrusion_penalty(vertices_a, tris_b, tau, margin_a)
                + _intrusion_penalty(points_a, tris_b, tau, margin_a)
            ) / vertices_a.shape[0]
            + (
                _intrusion_penalty(vertices_b, tris_a, tau, margin_b)
                + _intrusion_penalty(points_b, tris_a, tau, margin_b)
            ) / vertices_b.shape[0]
        )

    loss = (
        _intrusion_penalty(vertices_a, tris_b, tau) / vertices_a.shape[0]
        + _intrusion_penalty(vertices_b, tris_a, tau) / vertices_b.shape[0]
    )
    if float(loss) > 0:
        return loss

    samples_a = _piercing_samples(vertices_a, fa, vb_np[fb], pairs)
    samples_b = _piercing_samples(vertices_b, fb, va_np[fa], pairs[:, ::-1])
    loss = (
        _intrusion_penalty(samples_a, tris_b, tau) / vertices_a.shape[0]
        + _intrusion_penalty(samples_b, tris_a, tau) / vertices_b.shape[0]
    )
    if float(loss) == 0:
        logger.debug(f"{len(pairs)} intersecting triangle pairs without measurable penetration")
    return loss


def collision_loss(
    meshes: Sequence[Tuple[torch.Tensor, torch.Tensor]],
    tolerance: Optional[float] = None,
    samples: Optional[int] = None,
) -> torch.Tensor:
    """Sum of pairwise penetration penalties over all instances."""
    total = torch.zeros((), dtype=DTYPE)
    for (va, fa), (vb, fb) in itertools.combinations(meshes, 2):
        total = total + pair_collision_loss(va, fa, vb, fb, tolerance, samples)
    return total
