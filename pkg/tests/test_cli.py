import csv

import pytest

from app.geometry.camera import Camera
from app.main import main
from app.services.export_service import POSES_HEADER
from app.services.synthetic import write_population

FAST_FIT = ["--restarts", "4", "--restarts-refined", "1", "--iters-fit", "2", "--resolution", "32"]
FAST_JOINT = ["--iters-joint", "2", "--resolution", "32"]


def _rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture
def demo_dir(tmp_path):
    assert main(["demo", "--out", str(tmp_path / "demo")]) == 0
    return tmp_path / "demo"


@pytest.fixture
def fitted(demo_dir):
    out = demo_dir / "fit"
    assert main(["fit", str(demo_dir / "scene.cfg"), *FAST_FIT, "--out", str(out)]) == 0
    return out / "poses.csv"


def test_demo_writes_scene(demo_dir):
    """The demo directory holds a config, its masks, a manifest and the ground truth"""
    assert (demo_dir / "scene.cfg").exists()
    assert (demo_dir / "library.manifest").exists()
    assert (demo_dir / "truth.csv").exists()
    assert len(list(demo_dir.glob("demo_*_*.png"))) == 2


def test_fit_writes_poses(fitted):
    """One poses row per instance with the fit loss of each object"""
    rows = _rows(fitted)
    assert rows[0] == POSES_HEADER
    assert [r[1] for r in rows[1:]] == ["human", "object"]
    assert float(rows[2][-1]) >= 0
    assert (fitted.parent / "fit_losses.csv").exists()


def test_fit_is_deterministic(demo_dir, fitted):
    """The same seed reproduces the same poses"""
    again = demo_dir / "again"
    assert main(["fit", str(demo_dir / "scene.cfg"), *FAST_FIT, "--out", str(again)]) == 0
    assert _rows(again / "poses.csv") == _rows(fitted)


def test_arrange_exports_scene(demo_dir, fitted):
    """Arranging writes meshes, parameters, views and the loss log"""
    out = demo_dir / "arranged"
    args = ["arrange", str(demo_dir / "scene.cfg"), str(fitted), *FAST_JOINT, "--ablate", "collision", "--out", str(out)]
    assert main(args) == 0
    for name in ("params.csv", "metadata.yaml", "arranged_scene.obj", "view_front.png", "view_top.png", "view_side.png"):
        assert (out / name).exists()
    log = _rows(out / "loss_log.csv")
    assert len(log) == 1 + 3
    assert [row[0] for row in log[1:]] == ["0", "1", "2"]


def test_arrange_is_deterministic(demo_dir, fitted):
    """Two arrange runs with one seed and job count write identical parameters and logs"""
    outputs = []
    for name in ("first", "second"):
        out = demo_dir / name
        args = ["arrange", str(demo_dir / "scene.cfg"), str(fitted), *FAST_JOINT,
                "--seed", "7", "--jobs", "2", "--out", str(out)]
        assert main(args) == 0
        outputs.append(out)
    for name in ("params.csv", "loss_log.csv"):
        assert (outputs[0] / name).read_bytes() == (outputs[1] / name).read_bytes()


def test_arrange_independent(demo_dir, fitted):
    """The independent composition skips optimization"""
    out = demo_dir / "independent"
    args = ["arrange", str(demo_dir / "scene.cfg"), str(fitted), "--independent", "--resolution", "32", "--out", str(out)]
    assert main(args) == 0
    assert len(_rows(out / "loss_log.csv")) == 1
    rows = {r[0]: r for r in _rows(out / "params.csv")[1:]}
    assert float(rows["object_001_bat"][4]) == pytest.approx(0.9)


@pytest.mark.parametrize("argv", [
    [],
    ["fit"],
    ["paint", "scene.cfg"],
    ["fit", "scene.cfg", "--restarts", "many"],
])
def test_usage_errors(argv):
    """Malformed command lines exit with status 1"""
    assert main(argv) == 1


def test_unknown_ablation_is_a_usage_error(demo_dir, fitted):
    """Only known loss terms can be ablated"""
    assert main(["arrange", str(demo_dir / "scene.cfg"), str(fitted), "--ablate", "gravity"]) == 1


def test_missing_scene_is_a_data_error(tmp_path):
    """Unreadable inputs exit with status 2"""
    assert main(["fit", str(tmp_path / "absent.cfg")]) == 2


def test_learn_scales_without_rounds(tmp_path):
    """Zero rounds export the prior means and no plot"""
    write_population(tmp_path / "population", 2, camera=Camera(48, 36))
    out = tmp_path / "scales"
    dataset = str(tmp_path / "population" / "dataset.yaml")
    assert main(["learn-scales", dataset, "--rounds", "0", "--out", str(out)]) == 0
    means = _rows(out / "scale_means.csv")
    assert means[0] == ["round", "category", "mean_scale", "count"]
    assert ["0", "bat", "0.9", ""] in means
    assert not (out / "scale_histograms.png").exists()
    assert main(["learn-scales", dataset, "--rounds", "-1"]) == 1


def test_learn_scales_one_round(tmp_path):
    """A short round writes per-round means, histograms and a plot"""
    write_population(tmp_path / "population", 2, camera=Camera(48, 36))
    out = tmp_path / "scales"
    dataset = str(tmp_path / "population" / "dataset.yaml")
    assert main(["learn-scales", dataset, "--rounds", "1", *FAST_JOINT, "--out", str(out)]) == 0
    means = _rows(out / "scale_means.csv")
    assert [r[0] for r in means[1:]].count("1") == 1
    assert (out / "scale_histograms.png").exists()
