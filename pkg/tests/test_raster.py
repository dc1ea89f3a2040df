import numpy as np
import pytest
import torch
from scipy.ndimage import distance_transform_edt
from scipy.spatial.transform import Rotation

from app.assets.procedural import procedural_box
from app.errors import DimensionMismatchError, InvalidParameterError
from app.geometry.camera import Camera
from app.geometry.transforms import DTYPE, matrix_to_6d, object_to_world, rot6d_to_matrix
from app.raster.masks import distance_transform, downsample_mask, edge_map, mask_bbox, occlusion_indicator
from app.raster.rasterizer import composite, render_depth, render_instance_ids, render_silhouette
from tests.helpers import assert_gradients_close

NO_FACES = torch.zeros((0, 3), dtype=torch.long)


def _triangle(points):
    return torch.tensor(points, dtype=DTYPE), torch.tensor([[0, 1, 2]])


def _translated(mesh, offset):
    return torch.as_tensor(mesh.vertices + np.asarray(offset, dtype=np.float64)), mesh.torch_faces()


def test_large_triangle_covers_image():
    """A triangle far larger than the view covers every pixel"""
    vertices, faces = _triangle([[-10, -10, 1], [10, -10, 1], [0, 10, 1]])
    silhouette = render_silhouette(vertices, faces, Camera(width=16, height=16))
    assert bool((silhouette >= 0.99).all())


def test_empty_mesh_renders_nothing(small_camera):
    """No faces, no coverage"""
    silhouette = render_silhouette(torch.zeros((0, 3), dtype=DTYPE), NO_FACES, small_camera)
    assert silhouette.shape == (32, 32)
    assert float(silhouette.abs().sum()) == 0.0
    assert bool(torch.isinf(render_depth(torch.zeros((0, 3), dtype=DTYPE), NO_FACES, small_camera)).all())


def test_cube_silhouette_matches_polygon(small_camera):
    """Hard coverage equals the projected square; soft coverage stays close to it"""
    vertices, faces = _translated(procedural_box(), (0, 0, 3))
    hard = render_silhouette(vertices, faces, small_camera, hard=True).numpy()
    soft = render_silhouette(vertices, faces, small_camera).numpy()

    # The front face at z = 2.5 bounds the projection
    grid_x, grid_y = small_camera.pixel_centers_ndc()
    limit = 0.5 / 2.5
    oracle = ((grid_x.abs() <= limit) & (grid_y.abs() <= limit)).numpy()
    assert np.array_equal(hard > 0.5, oracle)
    assert oracle.sum() == 36

    assert np.all(np.abs(soft - hard) < 0.5)
    far = np.minimum(distance_transform_edt(oracle), distance_transform_edt(~oracle)) > 2
    assert np.all(np.abs(soft - hard)[far] < 0.01)


def test_silhouette_sharpens_toward_hard(small_camera):
    """Higher sharpness moves soft coverage toward the hard silhouette"""
    vertices, faces = _translated(procedural_box((1.0, 0.6, 0.8)), (0.1, 0.0, 4))
    hard = render_silhouette(vertices, faces, small_camera, hard=True)
    errors = [
        float((render_silhouette(vertices, faces, small_camera, sharpness=k) - hard).abs().mean())
        for k in (20.0, 200.0, 2000.0)
    ]
    assert errors[0] > errors[1] > errors[2]


def test_silhouette_gradient_matches_finite_differences():
    """Pose gradients of a weighted silhouette agree with central differences"""
    camera = Camera(width=64, height=64)
    mesh = procedural_box((0.8, 0.6, 0.7))
    V, F = mesh.torch_vertices(), mesh.torch_faces()
    weights = torch.as_tensor(np.random.default_rng(1).uniform(size=(64, 64)))
    R = Rotation.from_euler("xyz", [15, 30, -20], degrees=True).as_matrix()
    params = torch.cat([matrix_to_6d(R), torch.tensor([0.1, -0.05, 3.0, 0.0], dtype=DTYPE)])

    def weighted_coverage(p):
        world = object_to_world(V, rot6d_to_matrix(p[:6]), p[6:9], torch.exp(p[9]))
        return (render_silhouette(world, F, camera) * weights).sum()

    assert_gradients_close(weighted_coverage, params)


def test_components_combine_as_complement_product(small_camera):
    """Separate components overlapping on screen combine as 1 - (1 - a)(1 - b)"""
    near, near_faces = _translated(procedural_box((1.0, 1.0, 0.2)), (-0.2, 0.0, 3.0))
    far, _ = _translated(procedural_box((1.0, 1.0, 0.2)), (0.3, 0.1, 4.0))
    faces = torch.cat([near_faces, near_faces + near.shape[0]])
    both = render_silhouette(torch.cat([near, far]), faces, small_camera)
    a = render_silhouette(near, near_faces, small_camera)
    b = render_silhouette(far, near_faces, small_camera)
    assert torch.allclose(both, 1 - (1 - a) * (1 - b))
    assert bool(((a > 0.1) & (b > 0.1)).any())


def test_vertices_behind_camera_are_clamped(small_camera):
    """Bad poses render without raising"""
    vertices, faces = _triangle([[-1, -1, -2], [1, -1, 2], [0, 1, 2]])
    silhouette = render_silhouette(vertices, faces, small_camera)
    assert bool(torch.isfinite(silhouette).all())


def test_depth_of_fronto_parallel_triangle():
    """Constant depth where covered, +inf elsewhere"""
    camera = Camera(width=16, height=16)
    vertices, faces = _triangle([[-1, -1, 3], [1, -1, 3], [0, 1, 3]])
    depth = render_depth(vertices, faces, camera)
    covered = render_silhouette(vertices, faces, camera, hard=True) > 0.5
    assert bool(covered.any()) and bool((~covered).any())
    assert torch.allclose(depth[covered], torch.full_like(depth[covered], 3.0))
    assert bool(torch.isinf(depth[~covered]).all())


def test_depth_keeps_nearest_surface():
    """Of two stacked triangles the nearer one wins"""
    camera = Camera(width=16, height=16)
    near = torch.tensor([[-20, -20, 2], [20, -20, 2], [0, 20, 2]], dtype=DTYPE)
    vertices = torch.cat([near * torch.tensor([1, 1, 2], dtype=DTYPE), near])
    faces = torch.tensor([[0, 1, 2], [3, 4, 5]])
    assert torch.allclose(render_depth(vertices, faces, camera), torch.full((16, 16), 2.0, dtype=DTYPE))


def test_depth_of_slanted_triangle_matches_ray_cast():
    """Perspective-correct interpolation equals the ray-plane intersection"""
    camera = Camera(width=24, height=24)
    points = np.array([[-1.0, -1.0, 1.0], [1.0, -1.0, 1.0], [0.0, 1.0, 2.0]])
    depth = render_depth(torch.as_tensor(points), torch.tensor([[0, 1, 2]]), camera).numpy()
    normal = np.cross(points[1] - points[0], points[2] - points[0])
    grid_x, grid_y = (g.numpy() for g in camera.pixel_centers_ndc())
    rays = np.stack([grid_x, grid_y, np.ones_like(grid_x)], axis=-1)
    expected = np.dot(normal, points[0]) / (rays @ normal)
    covered = np.isfinite(depth)
    assert covered.sum() > 50
    assert np.allclose(depth[covered], expected[covered], atol=1e-4)
    assert expected[covered].min() >= 1.0 - 1e-9 and expected[covered].max() <= 2.0 + 1e-9


def test_depth_equals_minimum_over_faces(small_camera):
    """The z-buffer is the per-pixel minimum of single-face renders"""
    rotation = Rotation.from_euler("xy", [25, 40], degrees=True).as_matrix()
    mesh = procedural_box()
    vertices = torch.as_tensor(mesh.vertices @ rotation.T + np.array([0.0, 0.0, 4.0]))
    faces = mesh.torch_faces()
    full = render_depth(vertices, faces, small_camera)
    singles = torch.stack([render_depth(vertices, faces[k:k + 1], small_camera) for k in range(len(faces))])
    assert torch.equal(full, singles.min(dim=0).values)


def test_composite_and_instance_ids(small_camera):
    """Nearest instance owns each pixel, -1 for background"""
    front = _translated(procedural_box((0.5, 0.5, 0.5)), (0, 0, 3))
    back = _translated(procedural_box((2.0, 2.0, 0.5)), (0, 0, 6))
    ids, depth = render_instance_ids([back, front], small_camera)
    assert int(ids[16, 16]) == 1
    assert int(ids[16, 18]) == 0
    assert int(ids[0, 0]) == -1
    assert float(depth[16, 16]) == pytest.approx(2.75)
    with pytest.raises(ValueError):
        composite([])


def test_edge_map_cases():
    """Exterior band of width filter_size // 2"""
    assert float(edge_map(np.zeros((9, 9))).sum()) == 0.0
    assert float(edge_map(np.ones((9, 9))).sum()) == 0.0
    mask = np.zeros((9, 9))
    mask[4, 4] = 1
    expected = np.zeros((9, 9))
    expected[1:8, 1:8] = 1
    expected[4, 4] = 0
    assert np.array_equal(edge_map(mask).numpy(), expected)


def test_edge_map_is_disjoint_from_mask():
    """E(M) never overlaps M"""
    rng = np.random.default_rng(3)
    for _ in range(5):
        mask = (rng.uniform(size=(20, 20)) > 0.8).astype(np.float64)
        edges = edge_map(mask).numpy()
        assert set(np.unique(edges)) <= {0.0, 1.0}
        assert float((edges * mask).sum()) == 0.0


def test_distance_transform_cases():
    """Exact Euclidean distances"""
    mask = np.zeros((8, 8))
    mask[0, 0] = 1
    dt = distance_transform(mask)
    assert dt[4, 3] == pytest.approx(5.0)
    assert np.array_equal(distance_transform(np.ones((5, 5))), np.zeros((5, 5)))
    with pytest.raises(InvalidParameterError):
        distance_transform(np.zeros((5, 5)))


def test_distance_transform_matches_brute_force():
    """EDT equals the minimum over all foreground pixels"""
    mask = np.zeros((32, 32))
    mask[5, 7] = 1
    mask[20, 25] = 1
    dt = distance_transform(mask)
    seeds = np.argwhere(mask > 0)
    rows, cols = np.mgrid[0:32, 0:32]
    brute = np.min([np.hypot(rows - r, cols - c) for r, c in seeds], axis=0)
    assert np.allclose(dt, brute, atol=1e-12)


def test_occlusion_indicator_cases():
    """Pixels covered only by other instances are excluded"""
    target = np.zeros((4, 4))
    assert torch.equal(occlusion_indicator(0, [target]), torch.ones(4, 4, dtype=DTYPE))

    other = np.zeros((4, 4))
    other[:, :2] = 1
    indicator = occlusion_indicator(0, [target, other]).numpy()
    assert np.all(indicator[:, :2] == 0) and np.all(indicator[:, 2:] == 1)

    assert torch.equal(occlusion_indicator(1, [other, other]), torch.ones(4, 4, dtype=DTYPE))

    with pytest.raises(DimensionMismatchError):
        occlusion_indicator(0, [target, np.zeros((3, 4))])


def test_downsample_mask_and_bbox():
    """Area averaging re-thresholds at one half"""
    mask = np.zeros((4, 4))
    mask[:2, :2] = 1
    mask[2, 2] = 1
    small = downsample_mask(mask, 2, 2).numpy()
    assert np.array_equal(small, np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert mask_bbox(mask) == (0, 0, 2, 2)
    assert mask_bbox(np.zeros((3, 3))) is None
