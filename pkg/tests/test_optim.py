import numpy as np
import pytest
import torch

from app.assets.library import MeshLibrary
from app.assets.procedural import procedural_box
from app.config.categories import RestartBias
from app.config.schedules import FitSchedule, LossWeights, Stage
from app.errors import DimensionMismatchError, InvalidParameterError
from app.geometry.camera import Camera
from app.geometry.transforms import DTYPE, axis_angle_matrix, geodesic_distance
from app.losses.arrangement import segmentation_labels
from app.losses.collision import intersecting_triangle_pairs
from app.optim.adam import AdamState, adam_step
from app.optim.arrangement import ArrangementModel, evaluate_arrangement, optimize_arrangement
from app.optim.pose_fit import fit_object_pose, init_translation, select_exemplar
from app.optim.rotations import elevation_of, sample_rotations
from app.optim.scale_loop import empirical_scale_loop, reset_scales, scale_histogram
from app.raster.masks import occlusion_indicator
from app.raster.rasterizer import render_instance_ids, render_silhouette
from app.scene.models import ObjectInstance, Scene
from app.scene.placement import place_human, place_object
from app.services.synthetic import holding_scene, modal_masks, render_mask, synthetic_population

# Interaction-driven joint settings; the human prior is held tight so scale ambiguity falls on the object
JOINT_WEIGHTS = LossWeights(occ_sil=100.0, interaction=1.0, scale=0.01, depth=0.0, collision=0.0)
HUMAN_WEIGHT = 1e4


def test_adam_zero_gradient_keeps_parameters():
    """A zero gradient leaves parameters unchanged"""
    state = AdamState(lr=0.1)
    x = torch.tensor([1.0, -2.0], dtype=DTYPE)
    updated = adam_step(state, {"x": x}, {"x": torch.zeros(2, dtype=DTYPE)})
    assert torch.equal(updated["x"], x)
    assert state.step == 1


def test_adam_first_step_moves_by_learning_rate():
    """Bias correction makes the first step lr in the gradient sign direction"""
    state = AdamState(lr=0.05)
    updated = adam_step(state, {"x": torch.tensor([1.0], dtype=DTYPE)}, {"x": torch.tensor([3.0], dtype=DTYPE)})
    assert float(updated["x"]) == pytest.approx(0.95, abs=1e-6)


def test_adam_minimizes_quadratic_bowl():
    """x^2 from x = 1 with lr 0.1 converges within 200 steps"""
    state = AdamState(lr=0.1)
    params = {"x": torch.tensor([1.0], dtype=DTYPE)}
    for _ in range(200):
        params = adam_step(state, params, {"x": 2 * params["x"]})
    assert abs(float(params["x"])) < 1e-2


def test_adam_rejects_mismatched_names():
    """Gradients must name the same parameters"""
    with pytest.raises(DimensionMismatchError):
        adam_step(AdamState(), {"x": torch.zeros(1)}, {"y": torch.zeros(1)})


def test_adam_skips_non_finite_gradient():
    """NaN gradients leave the parameter and its moments untouched"""
    state = AdamState(lr=0.1)
    x = torch.tensor([1.0], dtype=DTYPE)
    updated = adam_step(state, {"x": x}, {"x": torch.tensor([float("nan")], dtype=DTYPE)})
    assert torch.equal(updated["x"], x)
    assert "x" not in state.m


def test_sample_rotations_are_deterministic():
    """The same seed gives the same restarts"""
    assert np.array_equal(sample_rotations(50, seed=4), sample_rotations(50, seed=4))
    assert not np.array_equal(sample_rotations(50, seed=4), sample_rotations(50, seed=5))


def test_upright_restarts_stay_within_elevation_range():
    """Upright bias keeps every elevation within [-30, 30] degrees"""
    rotations = sample_rotations(10000, RestartBias.UPRIGHT, seed=1)
    elevations = elevation_of(rotations)
    assert elevations.min() >= -30.0 - 1e-9 and elevations.max() <= 30.0 + 1e-9
    assert np.allclose(np.einsum("nij,nkj->nik", rotations, rotations), np.eye(3), atol=1e-9)


def test_uniform_restarts_have_unit_mean_trace():
    """Uniform rotations have an expected trace of one"""
    traces = np.trace(sample_rotations(10000, seed=2), axis1=1, axis2=2)
    assert traces.mean() == pytest.approx(1.0, abs=0.1)


def test_sample_rotations_needs_positive_count():
    """n must be positive"""
    with pytest.raises(InvalidParameterError):
        sample_rotations(0)


def test_init_translation_centered_square(cube):
    """A centered mask sized like the cube at depth 2 initializes to (0, 0, 2)"""
    camera = Camera(width=64, height=64)
    mask = np.zeros((64, 64))
    mask[24:40, 24:40] = 1
    assert np.allclose(init_translation(mask, camera, cube), [0.0, 0.0, 2.0])
    assert np.allclose(init_translation(mask, camera, cube, mean_scale=2.0), [0.0, 0.0, 4.0])
    with pytest.raises(InvalidParameterError):
        init_translation(np.zeros((64, 64)), camera, cube)


def test_init_translation_follows_mask_centroid(cube):
    """The translation lies on the ray through the mask centroid"""
    camera = Camera(width=64, height=48)
    mask = np.zeros((48, 64))
    mask[4:12, 40:56] = 1
    t = init_translation(mask, camera, cube)
    pixel = camera.ndc_to_pixel(torch.as_tensor(t[:2] / t[2]))
    assert np.allclose(pixel.numpy(), [48.0, 8.0])


def test_fit_skips_empty_mask(cube):
    """Empty masks return no result"""
    camera = Camera(width=32, height=32)
    schedule = FitSchedule.fit_defaults(iterations=1, restarts=2, restarts_refined=1, score_resolution=16)
    assert fit_object_pose(cube, np.zeros((32, 32)), None, camera, schedule, resolution=32) is None


def _pose_mask(mesh, rotation, translation, scale, camera):
    world = scale * (mesh.vertices @ rotation.T + translation)
    return render_mask(world, mesh.faces, camera).data


@pytest.mark.slow
def test_fit_recovers_known_pose(library):
    """Fitting a mask rendered from a known pose recovers that pose"""
    camera = Camera(width=64, height=64)
    mesh = library.get("bicycle")
    rotation = axis_angle_matrix("y", 35) @ axis_angle_matrix("x", 10)
    translation = np.array([0.1, -0.05, 2.2])
    scale = 2.0
    mask = _pose_mask(mesh, rotation, translation, scale, camera)

    restarts = np.concatenate([rotation[None], sample_rotations(7, seed=3)])
    schedule = FitSchedule.fit_defaults(iterations=150, lr=1e-2, restarts=8, restarts_refined=8, score_resolution=32)
    result = fit_object_pose(mesh, mask, None, camera, schedule, mean_scale=scale, rotations=restarts, resolution=64)

    assert geodesic_distance(result.rotation, rotation) < 5.0
    depth = scale * translation[2]
    assert np.linalg.norm(result.world_translation - scale * translation) < 0.02 * depth
    assert result.loss <= min(result.refined_initial_losses)


@pytest.mark.slow
def test_fit_recovers_pose_behind_occluder(library):
    """A third of the mask hidden behind another instance still fits the right rotation"""
    camera = Camera(width=64, height=64)
    mesh = library.get("bicycle")
    rotation = axis_angle_matrix("y", 35) @ axis_angle_matrix("x", 10)
    translation = np.array([0.1, -0.05, 2.2])
    scale = 2.0
    full = _pose_mask(mesh, rotation, translation, scale, camera).astype(bool)

    # an occluder over the right-hand columns hides about 30% of the object
    columns = np.flatnonzero(full.any(axis=0))
    counts = np.cumsum(full.sum(axis=0)[columns])
    cut = columns[np.searchsorted(counts, 0.7 * counts[-1])]
    occluder = np.zeros_like(full)
    occluder[:, cut:] = True
    visible = full & ~occluder
    assert 0.2 < 1 - visible.sum() / full.sum() < 0.4
    indicator = occlusion_indicator(0, [visible, occluder])

    restarts = np.concatenate([rotation[None], sample_rotations(7, seed=3)])
    schedule = FitSchedule.fit_defaults(iterations=150, lr=1e-2, restarts=8, restarts_refined=8, score_resolution=32)
    result = fit_object_pose(mesh, visible, indicator, camera, schedule, mean_scale=scale, rotations=restarts,
                             resolution=64)

    assert geodesic_distance(result.rotation, rotation) < 10.0


@pytest.mark.slow
def test_select_exemplar_finds_source_mesh(library):
    """The exemplar a mask was rendered from wins"""
    camera = Camera(width=48, height=48)
    exemplars = library.exemplars("laptop")
    rotation = axis_angle_matrix("y", 20) @ axis_angle_matrix("x", -15)
    translation = np.array([0.0, 0.0, 1.5])
    mask = _pose_mask(exemplars[2], rotation, translation, 1.0, camera)
    schedule = FitSchedule.fit_defaults(iterations=40, lr=1e-2, restarts=1, restarts_refined=1, score_resolution=24)
    result = select_exemplar(exemplars, mask, None, camera, schedule, rotations=rotation[None], resolution=48)
    assert result.exemplar == 2


def test_select_exemplar_tie_goes_to_first(cube):
    """Identical exemplars resolve to the lowest index"""
    camera = Camera(width=24, height=24)
    mask = _pose_mask(cube, np.eye(3), np.array([0.0, 0.0, 3.0]), 1.0, camera)
    schedule = FitSchedule.fit_defaults(iterations=2, lr=1e-2, restarts=1, restarts_refined=1, score_resolution=12)
    result = select_exemplar([cube, cube], mask, None, camera, schedule, rotations=np.eye(3)[None], resolution=24)
    assert result.exemplar == 0
    with pytest.raises(InvalidParameterError):
        select_exemplar([], mask, None, camera, schedule)


def test_arrangement_model_round_trip(library):
    """An untouched model reproduces the scene parameters"""
    scene = holding_scene("bat", library=library).truth
    model = ArrangementModel(scene, resolution=40)
    rebuilt = model.to_scene()
    assert rebuilt.objects[0].scale == pytest.approx(scene.objects[0].scale)
    assert np.allclose(rebuilt.objects[0].translation, scene.objects[0].translation)
    assert np.allclose(rebuilt.objects[0].rotation.matrix(), scene.objects[0].rotation.matrix(), atol=1e-12)
    assert rebuilt.humans[0].scale == pytest.approx(1.0)

    placed = model()
    assert np.allclose(placed.objects[0].vertices.detach().numpy(), place_object(scene.objects[0], library))
    assert np.allclose(placed.humans[0].vertices.detach().numpy(), place_human(scene.humans[0], scene.camera))


def test_evaluate_arrangement_at_truth(library):
    """The objective at ground truth is finite with every term present"""
    scene = holding_scene("bat", library=library).truth
    breakdown = evaluate_arrangement(scene, resolution=40)
    assert np.isfinite(float(breakdown.total))
    assert float(breakdown.coarse) > 0


def test_optimize_arrangement_never_worsens(library):
    """The returned iterate is never worse than the starting point"""
    scene = holding_scene("bat", size_factor=0.7, library=library).scene
    schedule = FitSchedule.joint_defaults(iterations=5, lr=1e-2)
    result = optimize_arrangement(scene, JOINT_WEIGHTS, schedule, resolution=40, progress=False)
    assert len(result.log) == 6
    best = min(row[-1] for row in result.log)
    assert best <= result.initial["total"]
    assert result.log[result.best_iteration][-1] == best


def test_optimize_empty_scene_is_a_no_op(library):
    """Nothing to arrange"""
    scene = holding_scene("bat", library=library).scene.with_objects([]).with_humans([])
    result = optimize_arrangement(scene, progress=False)
    assert result.scene is scene and result.log == []


@pytest.mark.slow
def test_interaction_resolves_scale_ambiguity(library):
    """A bat started twice too large shrinks into the person's hands"""
    synthetic = holding_scene("bat", size_factor=0.5, library=library)
    truth_obj = synthetic.truth.objects[0]
    stats = synthetic.scene.stats().model_copy(update={"human_variance_weight": HUMAN_WEIGHT})
    schedule = FitSchedule.joint_defaults(iterations=300, lr=1e-2)
    result = optimize_arrangement(synthetic.scene, JOINT_WEIGHTS, schedule, resolution=80, progress=False, stats=stats)

    obj = result.scene.objects[0]
    assert obj.scale == pytest.approx(truth_obj.scale, rel=0.15)

    human = result.scene.humans[0]
    world = place_object(obj, library)
    handle = world[library.get("bat").part_indices("Handle")].mean(axis=0)
    human_world = place_human(human, result.scene.camera)
    palms = np.concatenate([human.mesh.part_indices(p) for p in ("L Palm", "R Palm")])
    assert np.linalg.norm(handle - human_world[palms].mean(axis=0)) < 0.1


def _crate_scene(camera, placements, masks=None):
    """Two or more unit boxes of one category, each given as (translation, scale)."""
    crates = MeshLibrary({"crate": [procedural_box(name="crate")]})
    objects = [
        ObjectInstance("crate", scale=scale, translation=translation, name=f"crate{k}",
                       mask=None if masks is None else masks[k])
        for k, (translation, scale) in enumerate(placements)
    ]
    return Scene(camera=camera, library=crates, objects=tuple(objects))


def _intersections(scene):
    (a, b) = [place_object(obj, scene.library) for obj in scene.objects]
    faces = scene.library.get("crate").faces
    return len(intersecting_triangle_pairs(a, faces, b, faces))


@pytest.mark.slow
def test_collision_term_separates_interpenetrating_boxes():
    """Boxes sharing a fifth of their volume end apart; without the term they stay inside each other"""
    scene = _crate_scene(Camera(width=48, height=48), [((0.0, 0.0, 3.0), 1.0), ((0.1, 0.05, 3.75), 1.0)])
    assert _intersections(scene) > 0
    schedule = FitSchedule.joint_defaults(iterations=150, lr=1e-2)

    with_term = LossWeights(occ_sil=0, interaction=0, scale=0, depth=0, collision=1.0)
    result = optimize_arrangement(scene, with_term, schedule, resolution=48, progress=False)
    assert _intersections(result.scene) == 0
    assert result.log[result.best_iteration][-1] == 0.0

    without_term = with_term.ablate("collision")
    result = optimize_arrangement(scene, without_term, schedule, resolution=48, progress=False)
    assert _intersections(result.scene) > 0


@pytest.mark.slow
def test_depth_term_restores_segmentation_order():
    """A box pushed behind its neighbour along the viewing ray comes back in front"""
    camera = Camera(width=48, height=48)
    front = ((-0.3, 0.0, 3.0), 1.0)
    back = ((0.2, 0.05, 4.0), 1.0)
    truth = _crate_scene(camera, [front, back])
    masks = modal_masks([(place_object(o, truth.library), truth.library.get("crate").faces) for o in truth.objects],
                        camera)
    # scaling about the camera centre keeps the silhouette and moves the box behind its neighbour
    swapped = _crate_scene(camera, [(front[0], 1.5), back], masks)
    weights = LossWeights(occ_sil=1.0, interaction=0, scale=0, depth=10.0, collision=0)
    assert float(evaluate_arrangement(swapped, weights, resolution=48).depth) > 0

    schedule = FitSchedule.joint_defaults(iterations=150, lr=1e-2)
    result = optimize_arrangement(swapped, weights, schedule, resolution=48, progress=False)

    assert float(evaluate_arrangement(result.scene, weights, resolution=48).depth) < 1e-4
    faces = torch.as_tensor(result.scene.library.get("crate").faces)
    placed = [torch.as_tensor(place_object(o, result.scene.library)) for o in result.scene.objects]
    ids, _ = render_instance_ids([(v, faces) for v in placed], camera)
    covered = [render_silhouette(v, faces, camera, hard=True) > 0.5 for v in placed]
    contested = covered[0] & covered[1] & (segmentation_labels(masks) == 0)
    assert bool(contested.any())
    assert float((ids[contested] == 0).to(DTYPE).mean()) >= 0.99


def test_reset_scales_keeps_projection(library):
    """Resetting to category means leaves translations and table in step"""
    scene = holding_scene("bat", library=library).truth
    reset = reset_scales(scene, {"bat": 1.7})
    assert reset.objects[0].scale == 1.7
    assert reset.categories["bat"].mean_scale == 1.7
    assert reset.objects[0].translation == scene.objects[0].translation
    assert reset.categories["laptop"].mean_scale == scene.categories["laptop"].mean_scale


def test_scale_histogram_counts_every_value():
    """Histogram counts add up to the number of scales"""
    counts, edges = scale_histogram([0.8, 0.9, 1.0, 1.1], bins=3)
    assert counts.sum() == 4 and len(edges) == 4


def test_scale_loop_argument_checks(library):
    """No scenes or negative rounds are rejected; zero rounds keep the priors"""
    with pytest.raises(InvalidParameterError):
        empirical_scale_loop([], 1)
    scene = holding_scene("bat", library=library).scene
    with pytest.raises(InvalidParameterError):
        empirical_scale_loop([scene], -1)
    result = empirical_scale_loop([scene], 0)
    assert result.rounds == [] and result.final_means["bat"] == 0.9


@pytest.mark.slow
def test_scale_loop_learns_population_mean(library):
    """Two rounds move the bat mean to the population's true size"""
    population = synthetic_population(6, "bat", size_factor=1.3, jitter=0.05, seed=11, library=library)
    schedule = FitSchedule.joint_defaults(iterations=200, lr=1e-2)
    result = empirical_scale_loop(
        [s.scene for s in population], 2, weights=JOINT_WEIGHTS, schedule=schedule,
        jobs=2, resolution=64, human_variance_weight=HUMAN_WEIGHT,
    )
    assert len(result.rounds) == 2
    assert result.final_means["bat"] == pytest.approx(1.3 * 0.9, rel=0.1)
    assert result.categories() == ["bat"]


def test_stage_names():
    """Stages serialize by name"""
    assert Stage("fit") is Stage.FIT and Stage.JOINT.value == "joint"
