import numpy as np
import pytest
import torch
from scipy.spatial.transform import Rotation

from app.assets.library import MeshLibrary
from app.errors import BehindCameraError, InvalidParameterError, MeshLookupError
from app.geometry.camera import Camera, project
from app.geometry.mesh import TriMesh, concatenate
from app.geometry.transforms import (
    axis_angle_matrix,
    centroid,
    geodesic_distance,
    human_to_world,
    matrix_to_6d,
    matrix_to_quaternion,
    quaternion_to_matrix,
    rot6d_to_matrix,
    rotation_from_6d,
)
from app.scene.models import HumanInstance, ObjectInstance, Rotation6D, WeakCamera
from app.scene.placement import place_human, place_object


def _point_mesh(point):
    return TriMesh(vertices=[point], faces=np.zeros((0, 3), dtype=np.int64))


def _gram_schmidt(a1, a2):
    b1 = a1 / np.linalg.norm(a1)
    b2 = a2 - np.dot(b1, a2) * b1
    b2 = b2 / np.linalg.norm(b2)
    return np.stack([b1, b2, np.cross(b1, b2)], axis=1)


def test_rotation_from_6d_canonical_basis():
    """Canonical columns give the identity"""
    assert torch.allclose(rotation_from_6d([1, 0, 0], [0, 1, 0]), torch.eye(3, dtype=torch.float64))


def test_rotation_from_6d_ignores_column_lengths():
    """Scaled columns give the identity"""
    assert torch.allclose(rotation_from_6d([2, 0, 0], [0, 3, 0]), torch.eye(3, dtype=torch.float64))


def test_rotation_from_6d_matches_gram_schmidt():
    """Skewed columns match an independent Gram-Schmidt"""
    R = rotation_from_6d([1, 1, 0], [0, 1, 0]).numpy()
    expected = _gram_schmidt(np.array([1.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0]))
    assert np.allclose(R, expected, atol=1e-12)
    assert np.allclose(R.T @ R, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("a1,a2", [
    ([0, 0, 0], [0, 1, 0]),
    ([1, 0, 0], [0, 0, 0]),
    ([1, 0, 0], [2, 0, 0]),
])
def test_rotation_from_6d_rejects_degenerate_columns(a1, a2):
    """Vanishing or parallel columns are rejected"""
    with pytest.raises(InvalidParameterError):
        rotation_from_6d(a1, a2)


def test_random_6d_vectors_give_rotations():
    """Any nondegenerate 6D vector maps to an orthonormal matrix with det +1"""
    vectors = torch.as_tensor(np.random.default_rng(0).normal(size=(1000, 6)))
    R = rot6d_to_matrix(vectors)
    eye = torch.eye(3, dtype=torch.float64).expand(1000, 3, 3)
    assert torch.allclose(R.transpose(-1, -2) @ R, eye, atol=1e-6)
    assert torch.allclose(torch.linalg.det(R), torch.ones(1000, dtype=torch.float64), atol=1e-6)


def test_matrix_to_6d_round_trip():
    """6D columns of a rotation rebuild the same rotation"""
    R = Rotation.from_euler("xyz", [10, -40, 75], degrees=True).as_matrix()
    assert np.allclose(rot6d_to_matrix(matrix_to_6d(R)).numpy(), R, atol=1e-12)
    assert np.allclose(Rotation6D.from_matrix(R).matrix(), R, atol=1e-12)


def test_place_human_on_optical_axis():
    """A vertex at the origin lands at depth f / sigma"""
    camera = Camera(width=10, height=10)
    human = HumanInstance(mesh=_point_mesh([0, 0, 0]), weak_cam=WeakCamera(sigma=1.0))
    assert np.allclose(place_human(human, camera), [[0, 0, 1]])

    farther = HumanInstance(mesh=_point_mesh([0, 0, 0]), weak_cam=WeakCamera(sigma=0.5))
    assert np.allclose(place_human(farther, camera), [[0, 0, 2]])


def test_human_scale_keeps_projection():
    """Scaling a human about the camera center leaves its projection unchanged"""
    camera = Camera(width=640, height=480)
    mesh = _point_mesh([0.3, -0.2, 0.1])
    base = HumanInstance(mesh=mesh, weak_cam=WeakCamera(sigma=0.5, tx=0.1, ty=0.05))
    scaled = HumanInstance(mesh=mesh, weak_cam=WeakCamera(sigma=0.5, tx=0.1, ty=0.05), scale=2.0)

    origin = HumanInstance(mesh=_point_mesh([0, 0, 0]), weak_cam=WeakCamera(sigma=1.0), scale=2.0)
    assert np.allclose(place_human(origin, Camera(10, 10)), [[0, 0, 2]])

    pixel_base, depth_base = project(place_human(base, camera), camera)
    pixel_scaled, depth_scaled = project(place_human(scaled, camera), camera)
    assert torch.allclose(pixel_base, pixel_scaled, atol=1e-9)
    assert torch.allclose(2 * depth_base, depth_scaled)


def test_weak_camera_rejects_nonpositive_scale():
    """sigma <= 0 is invalid"""
    with pytest.raises(InvalidParameterError):
        WeakCamera(sigma=0.0)
    with pytest.raises(InvalidParameterError):
        human_to_world(torch.zeros(1, 3, dtype=torch.float64), (-1.0, 0.0, 0.0), torch.tensor(1.0), 1.0)


def test_place_object_cases():
    """Direct evaluation of s * (R V + t)"""
    library = MeshLibrary({"marker": [_point_mesh([1, 0, 0])], "stick": [_point_mesh([0, 1, 0])]})
    obj = ObjectInstance(category="marker", scale=2.0, translation=(1, 0, 0))
    assert np.allclose(place_object(obj, library), [[4, 0, 0]])

    identity = ObjectInstance(category="marker", scale=1.0, translation=(0, 0, 0))
    assert np.allclose(place_object(identity, library), [[1, 0, 0]])

    quarter = Rotation6D.from_matrix(axis_angle_matrix("z", 90))
    turned = ObjectInstance(category="stick", scale=0.5, rotation=quarter, translation=(0, 0, 5))
    assert np.allclose(place_object(turned, library), [[-0.5, 0, 2.5]], atol=1e-12)


def test_place_object_unknown_category(library):
    """Unknown categories and exemplars raise lookup errors"""
    with pytest.raises(MeshLookupError):
        place_object(ObjectInstance(category="spaceship"), library)
    with pytest.raises(MeshLookupError):
        place_object(ObjectInstance(category="bat", exemplar=7), library)


def test_place_object_rotation_equivariance(library):
    """Rotating the pose rotates the placed vertices"""
    R = Rotation.from_euler("xyz", [20, 30, -10], degrees=True).as_matrix()
    spin = Rotation.from_euler("zyx", [45, -15, 60], degrees=True).as_matrix()
    t = np.array([0.2, -0.1, 4.0])
    obj = ObjectInstance(category="bat", scale=0.9, rotation=Rotation6D.from_matrix(R), translation=tuple(t))
    moved = obj.with_pose(rotation=Rotation6D.from_matrix(spin @ R), translation=tuple(spin @ t))
    assert np.allclose(place_object(moved, library), place_object(obj, library) @ spin.T, atol=1e-10)


def test_object_scale_keeps_projection(library):
    """Scaling an object about the camera center leaves its projection unchanged"""
    camera = Camera(width=640, height=480)
    obj = ObjectInstance(category="bat", scale=0.9, translation=(0.1, 0.2, 5.0))
    pixels, _ = project(place_object(obj, library), camera)
    pixels_scaled, _ = project(place_object(obj.with_pose(scale=1.7), library), camera)
    assert torch.allclose(pixels, pixels_scaled, atol=1e-9)


def test_project_cases():
    """Principal axis, NDC mapping and projective invariance"""
    camera = Camera(width=640, height=480)
    pixels, depth = project([[0, 0, 5]], camera)
    assert torch.allclose(pixels, torch.tensor([[320.0, 240.0]], dtype=torch.float64))
    assert float(depth[0]) == 5.0

    pixels, depth = project([[1, 0, 2]], camera)
    assert torch.allclose(pixels, torch.tensor([[480.0, 240.0]], dtype=torch.float64))
    assert float(depth[0]) == 2.0

    a, _ = project([[0.3, -0.4, 2.0]], camera)
    b, _ = project([[0.9, -1.2, 6.0]], camera)
    assert torch.allclose(a, b)


@pytest.mark.parametrize("z", [0.0, -1.0])
def test_project_behind_camera(z):
    """Points on or behind the camera plane are rejected"""
    with pytest.raises(BehindCameraError):
        project([[0, 0, 1], [0, 0, z]], Camera(width=64, height=48))


def test_camera_resized_keeps_aspect():
    """Resizing scales both sides by the long-side ratio"""
    camera = Camera(width=640, height=480).resized(64)
    assert (camera.width, camera.height) == (64, 48)
    assert camera.ndc_extent == (1.0, 0.75)


def test_pixel_to_ndc_inverts_ndc_to_pixel():
    """Pixel centers map onto the rasterizer's NDC grid and back"""
    camera = Camera(width=64, height=48)
    grid_x, grid_y = camera.pixel_centers_ndc()
    centers = torch.tensor([[0.5, 0.5], [63.5, 47.5], [20.5, 10.5]], dtype=torch.float64)
    ndc = camera.pixel_to_ndc(centers)
    assert torch.allclose(ndc[0], torch.stack([grid_x[0, 0], grid_y[0, 0]]))
    assert torch.allclose(ndc[1], torch.stack([grid_x[47, 63], grid_y[47, 63]]))
    assert torch.allclose(ndc[2], torch.stack([grid_x[10, 20], grid_y[10, 20]]))
    assert torch.allclose(camera.ndc_to_pixel(ndc), centers)


def test_centroid_cases():
    """Mean of a point set"""
    assert torch.allclose(centroid([[0, 0, 0], [2, 0, 0]]), torch.tensor([1.0, 0, 0], dtype=torch.float64))
    assert torch.allclose(centroid([[3, 4, 5]]), torch.tensor([3.0, 4, 5], dtype=torch.float64))
    corners = [[(i >> 0) & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)]
    assert torch.allclose(centroid(corners), torch.full((3,), 0.5, dtype=torch.float64))
    with pytest.raises(InvalidParameterError):
        centroid(np.zeros((0, 3)))


def test_quaternion_conversion():
    """Quaternions are scalar-last with a nonnegative real part"""
    R = axis_angle_matrix("x", 200)
    quat = matrix_to_quaternion(R)
    assert quat[3] >= 0
    assert np.allclose(quaternion_to_matrix(quat), R, atol=1e-12)
    assert geodesic_distance(R, quaternion_to_matrix(quat)) == pytest.approx(0.0, abs=1e-5)
    assert geodesic_distance(np.eye(3), axis_angle_matrix("y", 30)) == pytest.approx(30.0)


def test_mesh_validation(cube):
    """Face indices must address existing vertices"""
    assert cube.is_watertight()
    with pytest.raises(InvalidParameterError):
        TriMesh(vertices=np.zeros((3, 3)), faces=[[0, 1, 3]])


def test_concatenate_offsets_faces_and_parts(library):
    """Merged meshes keep face and part references valid"""
    bat = library.get("bat")
    merged = concatenate([bat, bat], prefixes=["a ", "b "])
    assert merged.num_vertices == 2 * bat.num_vertices
    assert merged.faces.max() == 2 * bat.num_vertices - 1
    assert min(merged.parts["b Handle"]) >= bat.num_vertices
