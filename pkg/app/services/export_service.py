"""
Export of arranged scenes, parameter tables, loss logs and scale statistics.
"""

import csv
import logging
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import yaml  # noqa: E402

from ..assets.mesh_io import save_obj  # noqa: E402
from ..errors import ConfigurationError, MissingFileError, SceneArrangeError  # noqa: E402
from ..geometry.transforms import matrix_to_quaternion, quaternion_to_matrix  # noqa: E402
from ..losses.arrangement import LossBreakdown  # noqa: E402
from ..optim.scale_loop import ScaleLoopResult  # noqa: E402
from ..scene.models import Rotation6D, Scene  # noqa: E402
from ..scene.placement import place_human, place_object  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PARAMS_HEADER = ["instance", "kind", "category", "exemplar", "scale", "qx", "qy", "qz", "qw", "tx", "ty", "tz"]
POSES_HEADER = PARAMS_HEADER + ["loss"]
_IDENTITY_QUATERNION = [0.0, 0.0, 0.0, 1.0]


def params_rows(scene: Scene) -> List[List[Any]]:
    """One row per instance; humans carry their weak-perspective offset as translation."""
    rows = []
    for human in scene.humans:
        sigma, tx, ty = human.weak_cam.as_tuple()
        rows.append([human.name, "human", "", "", human.scale] + _IDENTITY_QUATERNION
                    + [tx, ty, scene.camera.f / sigma])
    for obj in scene.objects:
        quat = matrix_to_quaternion(obj.rotation.matrix())
        rows.append([obj.name, "object", obj.category, obj.exemplar, obj.scale]
                    + [float(q) for q in quat] + list(obj.translation))
    return rows


def write_params_csv(path: PathLike, scene: Scene, losses: Optional[Mapping[str, float]] = None) -> Path:
    """params.csv, or the fit poses file when ``losses`` is given."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(POSES_HEADER if losses is not None else PARAMS_HEADER)
        for row in params_rows(scene):
            if losses is not None:
                row = row + [losses.get(row[0], "")]
            writer.writerow(row)
    return path


def load_params(path: PathLike, scene: Scene) -> Scene:
    """Re-apply a params.csv (or poses file) to the instances of ``scene`` by name."""
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path)

    with open(path, "r", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(PARAMS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ConfigurationError(f"missing columns {sorted(missing)}", path=path, line=1)
        rows = {}
        for line_no, row in enumerate(reader, start=2):
            rows[row["instance"]] = (line_no, row)

    humans = []
    for human in scene.humans:
        if human.name not in rows:
            humans.append(human)
            continue
        line_no, row = rows.pop(human.name)
        humans.append(_with_scale(human, row, path, line_no))

    objects = []
    for obj in scene.objects:
        if obj.name not in rows:
            objects.append(obj)
            continue
        line_no, row = rows.pop(obj.name)
        try:
            quat = [float(row[k]) for k in ("qx", "qy", "qz", "qw")]
            objects.append(obj.with_pose(
                exemplar=int(row["exemplar"]),
                scale=float(row["scale"]),
                rotation=Rotation6D.from_matrix(quaternion_to_matrix(quat)),
                translation=tuple(float(row[k]) for k in ("tx", "ty", "tz")),
            ))
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"invalid parameters for '{obj.name}': {e}", path=path, line=line_no)
        if row["category"] and row["category"] != obj.category:
            raise ConfigurationError(
                f"'{obj.name}' is a {obj.category}, file says {row['category']}", path=path, line=line_no
            )

    if rows:
        unknown = sorted(rows)
        raise ConfigurationError(f"unknown instances {unknown}", path=path, line=rows[unknown[0]][0])
    return scene.with_humans(humans).with_objects(objects)


def _with_scale(human, row, path, line_no):
    try:
        return replace(human, scale=float(row["scale"]))
    except ValueError as e:
        raise ConfigurationError(f"invalid scale for '{human.name}': {e}", path=path, line=line_no)


def write_loss_log(path: PathLike, rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(LossBreakdown.CSV_HEADER)
        writer.writerows(rows)
    return path


class SceneExportService:
    """Writes arranged scenes and dataset statistics to an output directory"""

    def __init__(self, out_dir: PathLike):
        self.out_dir = Path(out_dir)

    def _prepare(self) -> None:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error(f"Cannot create output directory {self.out_dir}: {e}")
            raise SceneArrangeError(f"cannot write to {self.out_dir}: {e}") from e

    def export_scene(self, scene: Scene, metadata: Optional[Mapping[str, Any]] = None) -> Dict[str, Path]:
        """World-frame meshes per instance, a combined mesh, params.csv and metadata.yaml."""
        self._prepare()
        written: Dict[str, Path] = {}
        try:
            vertices, faces, groups = [], [], []
            offset = face_count = 0
            instances = [(h.name, place_human(h, scene.camera), h.mesh.faces) for h in scene.humans]
            instances += [(o.name, place_object(o, scene.library), scene.mesh_for(o).faces) for o in scene.objects]
            for name, world, mesh_faces in instances:
                written[name] = save_obj(self.out_dir / f"arranged_{name}.obj", world, mesh_faces)
                groups.append((name, face_count, face_count + len(mesh_faces)))
                face_count += len(mesh_faces)
                vertices.append(world)
                faces.append(np.asarray(mesh_faces) + offset)
                offset += len(world)
            if instances:
                written["scene"] = save_obj(
                    self.out_dir / "arranged_scene.obj", np.concatenate(vertices), np.concatenate(faces), groups
                )

            written["params"] = write_params_csv(self.out_dir / "params.csv", scene)
            record = {
                "image": {"width": scene.camera.width, "height": scene.camera.height},
                "focal_length": scene.camera.f,
                "seed": scene.seed,
                "humans": [h.name for h in scene.humans],
                "objects": [o.name for o in scene.objects],
            }
            record.update(dict(metadata or {}))
            written["metadata"] = self.out_dir / "metadata.yaml"
            with open(written["metadata"], "w") as f:
                yaml.safe_dump(record, f, sort_keys=False)
        except OSError as e:
            logger.error(f"Error exporting scene to {self.out_dir}: {e}")
            raise SceneArrangeError(f"cannot write to {self.out_dir}: {e}") from e

        logger.info(f"Exported {scene.instance_count} instance(s) to {self.out_dir}")
        return written

    def export_scale_tables(self, result: ScaleLoopResult) -> Dict[str, Path]:
        """Per-round means, histogram bins and a summary plot."""
        self._prepare()
        means_path = self.out_dir / "scale_means.csv"
        histogram_path = self.out_dir / "scale_histograms.csv"
        try:
            categories = sorted(result.initial)
            with open(means_path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["round", "category", "mean_scale", "count"])
                for category in categories:
                    writer.writerow([0, category, result.initial[category], ""])
                for r in result.rounds:
                    for category in sorted(r.scales):
                        writer.writerow([r.index, category, r.means[category], len(r.scales[category])])

            with open(histogram_path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["round", "category", "bin_start", "bin_end", "count"])
                for r in result.rounds:
                    for category, (counts, edges) in sorted(r.histograms.items()):
                        for k, count in enumerate(counts):
                            writer.writerow([r.index, category, float(edges[k]), float(edges[k + 1]), int(count)])
        except OSError as e:
            logger.error(f"Error exporting scale tables: {e}")
            raise SceneArrangeError(f"cannot write to {self.out_dir}: {e}") from e

        written = {"means": means_path, "histograms": histogram_path}
        if result.rounds:
            written["plot"] = self._plot_histograms(result)
        return written

    def _plot_histograms(self, result: ScaleLoopResult) -> Path:
        path = self.out_dir / "scale_histograms.png"
        categories = result.categories()
        fig, axes = plt.subplots(1, max(1, len(categories)), figsize=(4 * max(1, len(categories)), 3), squeeze=False)
        last = result.rounds[-1]
        for ax, category in zip(axes[0], categories):
            for r in result.rounds:
                if category not in r.histograms:
                    continue
                counts, edges = r.histograms[category]
                ax.stairs(counts, edges, label=f"round {r.index}")
            if category in last.means:
                ax.axvline(last.means[category], color="k", linestyle="--", linewidth=1)
            ax.set_title(category)
            ax.set_xlabel("scale")
            ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, dpi=100)
        plt.close(fig)
        return path
