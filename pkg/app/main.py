"""
Scene Arrange - command line entry point

    python -m app fit scene.cfg --out fit/
    python -m app arrange scene.cfg fit/poses.csv --out arranged/
    python -m app learn-scales dataset.yaml --rounds 2 --out scales/
    python -m app demo --out demo/

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import torch

from . import __version__
from .assets.library import load_library
from .config.schedules import ABLATION_FIELDS, FitSchedule
from .config.settings import settings
from .errors import SceneArrangeError
from .optim.scale_loop import empirical_scale_loop
from .scene.loader import load_dataset, load_scene
from .scene.models import Scene
from .services.export_service import SceneExportService, load_params, write_loss_log, write_params_csv
from .services.pipeline import arrange_scene, fit_scene
from .services.render_service import render_views
from .services.synthetic import write_demo

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors raised instead of exiting with status 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, help="random seed (default: the scene's)")
    parser.add_argument("--jobs", type=int, default=settings.jobs, help="worker threads for restarts and scenes")
    parser.add_argument("--resolution", type=int, default=settings.resolution,
                        help="working resolution, longer image side in pixels")
    parser.add_argument("--lr", type=float, help="Adam learning rate of the stage")
    parser.add_argument("--library", help="library manifest overriding the scene's")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")


def _add_fit_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--restarts", type=int, help="rotation restarts per exemplar")
    parser.add_argument("--restarts-refined", type=int, help="best restarts refined with Adam")
    parser.add_argument("--iters-fit", type=int, help="Adam iterations per refined restart")


def _add_joint_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--iters-joint", type=int, help="Adam iterations of the joint stage")
    parser.add_argument("--ablate", action="append", default=[], choices=sorted(ABLATION_FIELDS),
                        help="switch off one loss term (repeatable)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="scene-arrange", description="Recover 3D human-object arrangements from masks.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    fit = commands.add_parser("fit", help="fit exemplar and pose of every object")
    fit.add_argument("scene", help="scene.cfg")
    _add_common(fit)
    _add_fit_flags(fit)

    arrange = commands.add_parser("arrange", help="jointly optimize a fitted scene")
    arrange.add_argument("scene", help="scene.cfg")
    arrange.add_argument("poses", help="poses file written by 'fit'")
    arrange.add_argument("--independent", action="store_true",
                         help="skip the joint stage and export the independent composition")
    _add_common(arrange)
    _add_joint_flags(arrange)

    learn = commands.add_parser("learn-scales", help="learn category mean scales over a dataset")
    learn.add_argument("dataset", help="dataset manifest listing scene configs and poses files")
    learn.add_argument("--rounds", type=int, default=2, help="re-initialization rounds")
    _add_common(learn)
    _add_fit_flags(learn)
    _add_joint_flags(learn)

    demo = commands.add_parser("demo", help="write a synthetic demo scene")
    demo.add_argument("--out", required=True, help="output directory")
    demo.add_argument("--seed", type=int, default=settings.seed)
    demo.add_argument("--log-level", default=None)
    return parser


def _fit_schedule(scene: Scene, args) -> FitSchedule:
    overrides = {
        "restarts": args.restarts,
        "restarts_refined": args.restarts_refined,
        "iterations": args.iters_fit,
        "lr": args.lr,
    }
    values = scene.fit_schedule.model_dump()
    values.update({k: v for k, v in overrides.items() if v is not None})
    return FitSchedule(**values)


def _joint_schedule(scene: Scene, args) -> FitSchedule:
    values = scene.joint_schedule.model_dump()
    values.update({k: v for k, v in {"iterations": args.iters_joint, "lr": args.lr}.items() if v is not None})
    return FitSchedule(**values)


def _prepare(scene: Scene, args) -> Scene:
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    torch.manual_seed(scene.seed)
    weights = scene.weights
    for name in getattr(args, "ablate", []):
        weights = weights.ablate(name)
    return scene.with_weights(weights)


def _load(path: str, args) -> Scene:
    library = load_library(args.library) if args.library else None
    return _prepare(load_scene(path, library), args)


def _out_dir(args, default: Path) -> Path:
    out = Path(args.out) if args.out else default
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_fit(args) -> int:
    scene = _load(args.scene, args)
    schedule = _fit_schedule(scene, args)
    fitted, results = fit_scene(scene, schedule, jobs=args.jobs, resolution=args.resolution)
    out = _out_dir(args, Path(args.scene).parent / "fit")

    poses = write_params_csv(out / "poses.csv", fitted, {name: r.loss for name, r in results.items()})
    with open(out / "fit_losses.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["instance", "exemplar", "loss", "best_restart_loss", "restarts", "refined"])
        for name, r in results.items():
            writer.writerow([name, r.exemplar, r.loss, float(r.restart_losses.min()), len(r.restart_losses),
                             len(r.refined_initial_losses)])
    logger.info(f"Wrote {poses}")
    return EXIT_OK


def cmd_arrange(args) -> int:
    scene = _load(args.scene, args)
    scene = load_params(args.poses, scene)
    result = arrange_scene(
        scene, schedule=_joint_schedule(scene, args), independent=args.independent, resolution=args.resolution
    )
    out = _out_dir(args, Path(args.scene).parent / "arranged")

    metadata = {
        "ablation": sorted(set(args.ablate)),
        "seed": scene.seed,
        "independent": bool(args.independent),
        "weights": result.scene.weights.model_dump(),
    }
    if result.initial is not None:
        metadata["initial_loss"] = result.initial["total"]
        metadata["final_loss"] = result.final["total"]
        metadata["best_iteration"] = result.best_iteration
    SceneExportService(out).export_scene(result.scene, metadata)
    render_views(result.scene, out, resolution=args.resolution)
    write_loss_log(out / "loss_log.csv", result.log)
    return EXIT_OK


def cmd_learn_scales(args) -> int:
    if args.rounds < 0:
        raise UsageError(f"--rounds must be nonnegative, got {args.rounds}")
    library = load_library(args.library) if args.library else None
    scenes = []
    for scene, poses in load_dataset(args.dataset, library):
        scene = _prepare(scene, args)
        if poses is not None:
            scene = load_params(poses, scene)
        elif args.rounds > 0:
            scene, _ = fit_scene(scene, _fit_schedule(scene, args), jobs=args.jobs, resolution=args.resolution)
        scenes.append(scene)

    result = empirical_scale_loop(
        scenes,
        args.rounds,
        schedule=_joint_schedule(scenes[0], args),
        jobs=args.jobs,
        resolution=args.resolution,
    )
    out = _out_dir(args, Path(args.dataset).parent / "scales")
    SceneExportService(out).export_scale_tables(result)
    return EXIT_OK


def cmd_demo(args) -> int:
    path = write_demo(args.out, seed=args.seed)
    print(path)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "arrange": cmd_arrange,
    "learn-scales": cmd_learn_scales,
    "demo": cmd_demo,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE

    # Configure logging
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
    )

    try:
        return COMMANDS[args.command](args)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    except SceneArrangeError as e:
        logger.error(f"{args.command} failed: {e}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
