"""
Loss weights and optimization schedules.
"""

from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, Field, field_validator

from .settings import settings


class Stage(str, Enum):
    """Optimization stage."""
    FIT = "fit"
    JOINT = "joint"


# CLI ablation name -> LossWeights field
ABLATION_FIELDS = {
    "occ-sil": "occ_sil",
    "interaction": "interaction",
    "scale": "scale",
    "depth": "depth",
    "collision": "collision",
}


class LossWeights(BaseModel):
    """Weights of the joint objective plus the silhouette-fit toggles."""

    occ_sil: float = Field(1.0, ge=0)
    interaction: float = Field(1.0, ge=0)
    scale: float = Field(100.0, ge=0)
    depth: float = Field(10.0, ge=0)
    collision: float = Field(1e-3, ge=0)
    chamfer_enabled: bool = True
    offscreen_weight: float = Field(1.0, ge=0)

    def ablate(self, name: str) -> "LossWeights":
        """Return a copy with the named term switched off."""
        if name not in ABLATION_FIELDS:
            raise ValueError(f"unknown loss term '{name}', expected one of {sorted(ABLATION_FIELDS)}")
        return self.model_copy(update={ABLATION_FIELDS[name]: 0.0})

    def scaled(self, factor: float) -> "LossWeights":
        """Multiply every weight by a positive constant."""
        return self.model_copy(update={
            "occ_sil": self.occ_sil * factor,
            "interaction": self.interaction * factor,
            "scale": self.scale * factor,
            "depth": self.depth * factor,
            "collision": self.collision * factor,
            "offscreen_weight": self.offscreen_weight * factor,
        })


class FitSchedule(BaseModel):
    """Adam schedule of one stage."""

    stage: Stage
    iterations: int = Field(gt=0)
    lr: float = Field(gt=0)
    restarts: int = Field(10000, gt=0)
    restarts_refined: int = Field(20, gt=0)
    score_resolution: int = Field(64, gt=0)

    @field_validator("restarts_refined")
    @classmethod
    def _refined_not_above_restarts(cls, v: int, info) -> int:
        restarts = info.data.get("restarts")
        if restarts is not None and v > restarts:
            return restarts
        return v

    @classmethod
    def fit_defaults(cls, **overrides: Any) -> "FitSchedule":
        values = dict(
            stage=Stage.FIT,
            iterations=settings.iters_fit,
            lr=settings.lr,
            restarts=settings.restarts,
            restarts_refined=settings.restarts_refined,
            score_resolution=settings.score_resolution,
        )
        values.update(overrides)
        return cls(**values)

    @classmethod
    def joint_defaults(cls, **overrides: Any) -> "FitSchedule":
        values = dict(stage=Stage.JOINT, iterations=settings.iters_joint, lr=settings.lr)
        values.update(overrides)
        return cls(**values)


def dump_defaults() -> Dict[str, Any]:
    """Default hyperparameters as a plain dictionary."""
    fit = FitSchedule.fit_defaults()
    joint = FitSchedule.joint_defaults()
    return {
        "fit": {"lr": fit.lr, "iterations": fit.iterations, "restarts": fit.restarts},
        "joint": {"lr": joint.lr, "iterations": joint.iterations},
        "edge_filter_size": settings.edge_filter_size,
        "elevation_range": list(settings.elevation_range),
        "weights": LossWeights().model_dump(),
        "resolution": settings.resolution,
        "sharpness": settings.sharpness,
        "focal_length": settings.focal_length,
    }
