import pytest

from app.assets.library import MeshLibrary
from app.assets.procedural import procedural_box
from app.geometry.camera import Camera


@pytest.fixture(scope="session")
def library():
    return MeshLibrary.procedural()


@pytest.fixture
def cube():
    return procedural_box()


@pytest.fixture
def small_camera():
    return Camera(width=32, height=32)
