"""
Wavefront OBJ meshes and part-annotation sidecars.

Part files hold one region per line: ``partname idx idx ...`` with 0-based
vertex indices; the name is every token before the first integer, so names
such as ``L Palm`` may contain spaces.
"""

import logging
from pathlib import Path
from typing import Dict, FrozenSet, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ConfigurationError, MissingFileError
from ..geometry.mesh import TriMesh

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def load_obj(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Read ``v`` and ``f`` records; polygons are fan-triangulated."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path)

    vertices, faces = [], []
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            if line.startswith('#'):
                continue
            values = line.split()
            if not values:
                continue
            try:
                if values[0] == 'v':
                    vertices.append([float(values[1]), float(values[2]), float(values[3])])
                elif values[0] == 'f':
                    polygon = []
                    for token in values[1:]:
                        index = int(token.split('/')[0])
                        # Negative indices count back from the latest vertex
                        polygon.append(index - 1 if index > 0 else len(vertices) + index)
                    for k in range(1, len(polygon) - 1):
                        faces.append([polygon[0], polygon[k], polygon[k + 1]])
            except (ValueError, IndexError) as e:
                raise ConfigurationError(f"malformed OBJ record: {e}", path=path, line=line_no)

    return np.array(vertices, dtype=np.float64).reshape(-1, 3), np.array(faces, dtype=np.int64).reshape(-1, 3)


def save_obj(
    path: PathLike,
    vertices: np.ndarray,
    faces: np.ndarray,
    groups: Optional[Sequence[Tuple[str, int, int]]] = None,
) -> Path:
    """Write an OBJ file; ``groups`` lists (name, first_face, end_face) object groups."""
    path = Path(path)
    vertices = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    faces = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    starts = {start: name for name, start, _ in (groups or [])}

    with open(path, "w") as fp:
        for v in vertices:
            fp.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for k, face in enumerate(faces):
            if k in starts:
                fp.write(f"o {starts[k]}\n")
            fp.write(f"f {face[0] + 1:d} {face[1] + 1:d} {face[2] + 1:d}\n")
    return path


def load_parts(path: PathLike) -> Dict[str, FrozenSet[int]]:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path)

    parts: Dict[str, FrozenSet[int]] = {}
    with open(path, "r") as f:
        for line_no, line in enumerate(f, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith('#'):
                continue
            first_index = next((k for k, t in enumerate(tokens) if t.lstrip('-').isdigit()), len(tokens))
            name = " ".join(tokens[:first_index])
            if not name:
                raise ConfigurationError("part line without a name", path=path, line=line_no)
            indices = [int(t) for t in tokens[first_index:]]
            if any(i < 0 for i in indices):
                raise ConfigurationError(f"negative vertex index in part '{name}'", path=path, line=line_no)
            parts[name] = frozenset(parts.get(name, frozenset())) | set(indices)
    return parts


def save_parts(path: PathLike, parts: Mapping[str, FrozenSet[int]]) -> Path:
    path = Path(path)
    with open(path, "w") as fp:
        for name in sorted(parts):
            indices = " ".join(str(i) for i in sorted(parts[name]))
            fp.write(f"{name} {indices}\n")
    return path


def load_mesh(obj_path: PathLike, parts_path: Optional[PathLike] = None, name: str = "") -> TriMesh:
    """Load a mesh and its optional part annotation, warning when it is not watertight."""
    vertices, faces = load_obj(obj_path)
    parts = load_parts(parts_path) if parts_path is not None else {}
    for part, indices in parts.items():
        if indices and max(indices) >= len(vertices):
            raise ConfigurationError(
                f"part '{part}' references vertex {max(indices)} but the mesh has {len(vertices)}",
                path=parts_path,
            )
    mesh = TriMesh(vertices=vertices, faces=faces, parts=parts, name=name or Path(obj_path).stem)
    mesh.warn_if_open()
    logger.debug(f"Loaded mesh {obj_path}: {mesh.num_vertices} vertices, {mesh.num_faces} faces")
    return mesh


def save_mesh(mesh: TriMesh, obj_path: PathLike, parts_path: Optional[PathLike] = None) -> Path:
    save_obj(obj_path, mesh.vertices, mesh.faces)
    if parts_path is not None:
        save_parts(parts_path, mesh.parts)
    return Path(obj_path)
