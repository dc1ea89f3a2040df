"""
Scene configuration files.

A ``scene.cfg`` is a YAML mapping, one file per image:

    image: {width: 640, height: 480}
    focal_length: 1.0
    library: library.manifest        # optional; procedural library otherwise
    seed: 0
    humans:
      - mesh: human_000.obj
        parts: human_000.parts
        weak_cam: {sigma: 0.25, tx: 0.1, ty: 0.0}
        mask: img_000_person.png
    objects:
      - category: bat
        mask: img_001_bat.png
    weights: {depth: 0.0}              # any LossWeights field
    schedules:
      fit: {iterations: 50}
      joint: {lr: 0.01}
    categories:
      bat: {z_depth_threshold: 4.0}    # overrides of library rows

Paths are relative to the config file.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError

from ..assets.library import MeshLibrary, load_library
from ..assets.masks_io import load_mask
from ..assets.mesh_io import load_mesh
from ..config.categories import CategoryConfig
from ..config.schedules import FitSchedule, LossWeights
from ..config.settings import settings
from ..config.yaml_source import YamlSource
from ..errors import ConfigurationError, DimensionMismatchError, MeshLookupError
from ..geometry.camera import Camera
from .models import HumanInstance, Mask, ObjectInstance, Scene, WeakCamera

logger = logging.getLogger(__name__)


class ImageSize(BaseModel):
    width: int = Field(gt=0)
    height: int = Field(gt=0)


class WeakCamEntry(BaseModel):
    sigma: float = Field(gt=0)
    tx: float = 0.0
    ty: float = 0.0


class HumanEntry(BaseModel):
    mesh: str
    parts: Optional[str] = None
    weak_cam: WeakCamEntry
    mask: Optional[str] = None
    scale: float = Field(1.0, gt=0)
    name: Optional[str] = None


class ObjectEntry(BaseModel):
    category: str
    mask: str
    exemplar: int = Field(0, ge=0)
    name: Optional[str] = None


class SchedulesEntry(BaseModel):
    fit: Dict[str, Any] = Field(default_factory=dict)
    joint: Dict[str, Any] = Field(default_factory=dict)


class SceneConfig(BaseModel):
    image: ImageSize
    focal_length: float = Field(default_factory=lambda: settings.focal_length, gt=0)
    library: Optional[str] = None
    seed: int = Field(default_factory=lambda: settings.seed)
    humans: List[HumanEntry] = Field(default_factory=list)
    objects: List[ObjectEntry] = Field(default_factory=list)
    weights: Dict[str, Any] = Field(default_factory=dict)
    schedules: SchedulesEntry = Field(default_factory=SchedulesEntry)
    categories: Dict[str, Dict[str, Any]] = Field(default_factory=dict)


def load_scene(path: Union[str, Path], library: Optional[MeshLibrary] = None) -> Scene:
    """Load and fully validate a scene config."""
    source = YamlSource(path)
    try:
        config = SceneConfig(**source.data)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first["loc"]
        raise source.error(f"invalid scene config at {'.'.join(str(k) for k in loc)}: {first['msg']}", *loc)

    camera = Camera(width=config.image.width, height=config.image.height, f=config.focal_length)
    if library is None:
        library = load_library(source.resolve(config.library, "library") if config.library else None)

    categories = dict(library.table)
    for name, overrides in config.categories.items():
        base = categories[name].model_dump() if name in categories else {}
        try:
            categories[name] = CategoryConfig(**{**base, **overrides, "name": name})
        except ValidationError as e:
            raise source.error(f"invalid category row for '{name}': {e.errors()[0]['msg']}", "categories", name)

    humans = []
    for i, entry in enumerate(config.humans):
        keys = ("humans", i)
        mesh = load_mesh(
            source.resolve(entry.mesh, *keys, "mesh"),
            source.resolve(entry.parts, *keys, "parts") if entry.parts else None,
            name=entry.name or f"human_{i:03}",
        )
        mask = _load_registered_mask(source, camera, entry.mask, *keys, "mask") if entry.mask else None
        humans.append(HumanInstance(
            mesh=mesh,
            weak_cam=WeakCamera(entry.weak_cam.sigma, entry.weak_cam.tx, entry.weak_cam.ty),
            scale=entry.scale,
            mask=mask,
            name=entry.name or f"human_{i:03}",
        ))

    objects = []
    for j, entry in enumerate(config.objects):
        keys = ("objects", j)
        if not library.has(entry.category):
            path, line = source.location(*keys, "category")
            raise MeshLookupError(f"{path}:{line}: unknown category '{entry.category}'")
        if entry.category not in categories:
            raise source.error(f"no category configuration for '{entry.category}'", *keys, "category")
        if entry.exemplar >= library.exemplar_count(entry.category):
            path, line = source.location(*keys, "exemplar")
            raise MeshLookupError(f"{path}:{line}: category '{entry.category}' has no exemplar {entry.exemplar}")
        instance_id = len(config.humans) + j
        objects.append(ObjectInstance(
            category=entry.category,
            exemplar=entry.exemplar,
            scale=categories[entry.category].mean_scale,
            mask=_load_registered_mask(source, camera, entry.mask, *keys, "mask"),
            name=entry.name or f"object_{instance_id:03}_{entry.category}",
        ))

    if humans:
        human_parts = set.intersection(*(set(h.parts) for h in humans))
        used = {o.category: categories[o.category] for o in objects}
        try:
            library.validate_parts(human_parts, used)
        except ConfigurationError as e:
            raise source.error(str(e), "objects")

    try:
        weights = LossWeights(**config.weights)
        fit_schedule = FitSchedule.fit_defaults(**config.schedules.fit)
        joint_schedule = FitSchedule.joint_defaults(**config.schedules.joint)
    except ValidationError as e:
        raise source.error(f"invalid weights or schedules: {e.errors()[0]['msg']}", "weights")

    scene = Scene(
        camera=camera,
        library=library,
        humans=tuple(humans),
        objects=tuple(objects),
        categories=categories,
        weights=weights,
        fit_schedule=fit_schedule,
        joint_schedule=joint_schedule,
        seed=config.seed,
    )
    logger.info(f"Loaded scene {source.path}: {len(humans)} human(s), {len(objects)} object(s)")
    return scene


def _load_registered_mask(source: YamlSource, camera: Camera, relative: str, *keys) -> Mask:
    mask = load_mask(source.resolve(relative, *keys))
    if (mask.width, mask.height) != (camera.width, camera.height):
        path, line = source.location(*keys)
        raise DimensionMismatchError(
            f"{path}:{line}: mask {relative} is {mask.width}x{mask.height}, "
            f"image is {camera.width}x{camera.height}"
        )
    return mask


class DatasetEntry(BaseModel):
    config: str
    poses: Optional[str] = None


class DatasetManifest(BaseModel):
    scenes: List[DatasetEntry] = Field(min_length=1)


def load_dataset(path: Union[str, Path], library: Optional[MeshLibrary] = None) -> List[Tuple[Scene, Optional[Path]]]:
    """Scenes of a dataset manifest with their cached poses files, if any.

        scenes:
          - config: scene_000/scene.cfg
            poses: scene_000/poses.csv
    """
    source = YamlSource(path)
    try:
        manifest = DatasetManifest(**source.data)
    except ValidationError as e:
        first = e.errors()[0]
        raise source.error(f"invalid dataset manifest: {first['msg']}", *first["loc"])

    scenes = []
    for k, entry in enumerate(manifest.scenes):
        scene = load_scene(source.resolve(entry.config, "scenes", k, "config"), library)
        poses = source.resolve(entry.poses, "scenes", k, "poses") if entry.poses else None
        scenes.append((scene, poses))
    logger.info(f"Loaded dataset {source.path}: {len(scenes)} scene(s)")
    return scenes
