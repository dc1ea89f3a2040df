"""
Synthetic scenes with known ground truth.

Masks are rendered from ground-truth poses, so fitting and arrangement can be
checked against exact answers. Used by the ``demo`` command, the scale
learning population and the test suite.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch
import yaml

from ..assets.library import MeshLibrary
from ..assets.masks_io import mask_filename, save_mask
from ..assets.mesh_io import save_mesh
from ..assets.procedural import PROCEDURAL_CATEGORIES, procedural_exemplar_count, procedural_human
from ..geometry.camera import Camera
from ..geometry.mesh import TriMesh
from ..geometry.transforms import axis_angle_matrix
from ..raster.rasterizer import render_instance_ids, render_silhouette
from ..scene.models import HumanInstance, Mask, ObjectInstance, Rotation6D, Scene, WeakCamera
from ..scene.placement import place_human, place_object
from .export_service import write_params_csv

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

DEFAULT_CAMERA = Camera(width=160, height=120)
PERSON_CATEGORY = "person"


@dataclass
class SyntheticScene:
    """A scene ready for optimization and the same scene at ground truth."""
    scene: Scene
    truth: Scene


def render_mask(vertices, faces, cam: Camera) -> Mask:
    """Hard silhouette of a world-frame mesh."""
    with torch.no_grad():
        silhouette = render_silhouette(torch.as_tensor(vertices), torch.as_tensor(faces), cam, hard=True)
    return Mask(silhouette.numpy() > 0.5)


def modal_masks(meshes: Sequence, cam: Camera) -> List[Mask]:
    """Visible-surface segmentation of several world-frame meshes, one mask each."""
    ids, _ = render_instance_ids([(torch.as_tensor(v), torch.as_tensor(f)) for v, f in meshes], cam)
    ids = ids.numpy()
    return [Mask(ids == k) for k in range(len(meshes))]


def part_centroid(mesh: TriMesh, part: str) -> np.ndarray:
    return mesh.vertices[mesh.part_indices(part)].mean(axis=0)


def holding_scene(
    category: str = "bat",
    size_factor: float = 1.0,
    human_depth: float = 3.0,
    camera: Camera = DEFAULT_CAMERA,
    library: Optional[MeshLibrary] = None,
    seed: int = 0,
    exemplar: int = 0,
    jitter: float = 0.0,
) -> SyntheticScene:
    """A person holding a handheld object by its handle.

    The true object scale is ``size_factor`` times the category mean, times a
    lognormal factor of spread ``jitter``. The object to optimize starts at
    the category mean with the true rotation and translation, which leaves its
    projection identical to the truth.
    """
    library = library or MeshLibrary.procedural()
    rng = np.random.default_rng(seed)
    row = library.config_for(category)
    mesh = library.get(category, exemplar)
    handle = sorted(row.object_parts)[0]

    human_mesh = procedural_human("holding")
    weak_cam = WeakCamera(sigma=camera.f / human_depth, tx=float(rng.uniform(-0.2, 0.2)), ty=0.0)
    human = HumanInstance(mesh=human_mesh, weak_cam=weak_cam, name="human_000")
    palms = [p for p in row.human_parts if p in human_mesh.parts]
    grip = np.mean([part_centroid(human_mesh, p) for p in palms], axis=0) + np.array(
        [weak_cam.tx, weak_cam.ty, camera.f / weak_cam.sigma]
    )

    rotation = axis_angle_matrix("y", float(rng.uniform(-25, 25))) @ axis_angle_matrix(
        "z", float(rng.uniform(-70, -40))
    )
    true_scale = row.mean_scale * size_factor * float(np.exp(rng.normal(0.0, jitter)))
    translation = grip / true_scale - rotation @ part_centroid(mesh, handle)

    truth_obj = ObjectInstance(
        category=category,
        exemplar=exemplar,
        scale=true_scale,
        rotation=Rotation6D.from_matrix(rotation),
        translation=tuple(translation),
        name=f"object_001_{category}",
    )
    world = [
        (place_human(human, camera), human_mesh.faces),
        (place_object(truth_obj, library), mesh.faces),
    ]
    human_mask, object_mask = modal_masks(world, camera)

    truth = Scene(
        camera=camera,
        library=library,
        humans=(HumanInstance(mesh=human_mesh, weak_cam=weak_cam, mask=human_mask, name=human.name),),
        objects=(truth_obj.with_pose(mask=object_mask),),
        seed=seed,
    )
    start = truth.with_objects([truth.objects[0].with_pose(scale=row.mean_scale)])
    return SyntheticScene(scene=start, truth=truth)


def synthetic_population(
    n: int,
    category: str = "bat",
    size_factor: float = 1.3,
    jitter: float = 0.05,
    seed: int = 0,
    camera: Camera = DEFAULT_CAMERA,
    library: Optional[MeshLibrary] = None,
) -> List[SyntheticScene]:
    """``n`` holding scenes whose true sizes center on ``size_factor`` times the category mean."""
    library = library or MeshLibrary.procedural()
    rng = np.random.default_rng(seed)
    return [
        holding_scene(
            category,
            size_factor=size_factor,
            human_depth=float(rng.uniform(2.5, 4.0)),
            camera=camera,
            library=library,
            seed=int(rng.integers(0, 2**31 - 1)),
            jitter=jitter,
        )
        for _ in range(n)
    ]


def write_library_manifest(path: PathLike) -> Path:
    """Manifest naming every procedural exemplar."""
    path = Path(path)
    categories = {
        c: {"exemplars": [{"procedural": c, "variant": k} for k in range(procedural_exemplar_count(c))]}
        for c in PROCEDURAL_CATEGORIES
    }
    with open(path, "w") as f:
        yaml.safe_dump({"categories": categories}, f, sort_keys=False)
    return path


def write_scene(
    scene: Scene,
    out_dir: PathLike,
    image: str = "img",
    library: Optional[str] = None,
    weights: Optional[Mapping[str, Any]] = None,
    schedules: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Write masks, human meshes and a ``scene.cfg`` that loads back into ``scene``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config: Dict[str, Any] = {
        "image": {"width": scene.camera.width, "height": scene.camera.height},
        "focal_length": scene.camera.f,
        "seed": scene.seed,
    }
    if library:
        config["library"] = library

    humans = []
    for i, human in enumerate(scene.humans):
        mesh_name = f"human_{i:03}"
        save_mesh(human.mesh, out_dir / f"{mesh_name}.obj", out_dir / f"{mesh_name}.parts")
        entry = {
            "name": human.name,
            "mesh": f"{mesh_name}.obj",
            "parts": f"{mesh_name}.parts",
            "weak_cam": {"sigma": human.weak_cam.sigma, "tx": human.weak_cam.tx, "ty": human.weak_cam.ty},
        }
        if human.mask is not None:
            entry["mask"] = mask_filename(image, i, PERSON_CATEGORY)
            save_mask(out_dir / entry["mask"], human.mask)
        humans.append(entry)
    config["humans"] = humans

    objects = []
    for j, obj in enumerate(scene.objects):
        instance = len(scene.humans) + j
        mask = obj.mask if obj.mask is not None else Mask.zeros(scene.camera.width, scene.camera.height)
        filename = mask_filename(image, instance, obj.category)
        save_mask(out_dir / filename, mask)
        objects.append({"name": obj.name, "category": obj.category, "mask": filename})
    config["objects"] = objects

    if weights:
        config["weights"] = dict(weights)
    if schedules:
        config["schedules"] = {k: dict(v) for k, v in schedules.items()}

    path = out_dir / "scene.cfg"
    with open(path, "w") as f:
        yaml.safe_dump(config, f, sort_keys=False)
    logger.info(f"Wrote scene {path}: {len(humans)} human(s), {len(objects)} object(s)")
    return path


def write_demo(out_dir: PathLike, seed: int = 0) -> Path:
    """Self-contained demo: a person holding a bat, with library manifest and ground truth."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_library_manifest(out_dir / "library.manifest")
    synthetic = holding_scene("bat", size_factor=1.0, seed=seed)
    path = write_scene(synthetic.scene, out_dir, image="demo", library="library.manifest")
    write_params_csv(out_dir / "truth.csv", synthetic.truth)
    return path


def write_population(
    out_dir: PathLike,
    n: int,
    category: str = "bat",
    size_factor: float = 1.3,
    jitter: float = 0.05,
    seed: int = 0,
    camera: Camera = DEFAULT_CAMERA,
) -> Path:
    """One directory per scene with its config and cached poses, plus ``dataset.yaml``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for k, synthetic in enumerate(synthetic_population(n, category, size_factor, jitter, seed, camera)):
        scene_dir = out_dir / f"scene_{k:03}"
        write_scene(synthetic.scene, scene_dir, image=f"pop{k:03}")
        write_params_csv(scene_dir / "poses.csv", synthetic.scene)
        write_params_csv(scene_dir / "truth.csv", synthetic.truth)
        entries.append({"config": f"scene_{k:03}/scene.cfg", "poses": f"scene_{k:03}/poses.csv"})
    path = out_dir / "dataset.yaml"
    with open(path, "w") as f:
        yaml.safe_dump({"scenes": entries}, f, sort_keys=False)
    logger.info(f"Wrote population of {n} {category} scene(s) to {out_dir}")
    return path
