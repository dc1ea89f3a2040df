"""
Per-category interaction thresholds, part pairs and scale priors.
"""

import logging
import os
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Set, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError

from .settings import settings
from ..errors import ConfigurationError

logger = logging.getLogger(__name__)


class RestartBias(str, Enum):
    """Rotation restart distribution."""
    NONE = "none"
    UPRIGHT = "upright"


class CategoryConfig(BaseModel):
    """One row of the category table."""

    name: str
    coarse_xy_expand: float = Field(ge=0)
    fine_xy_expand: float = Field(ge=0)
    z_depth_threshold: float = Field(gt=0)
    # (object-part, human-part)
    part_pairs: List[Tuple[str, str]] = Field(default_factory=list)
    mean_scale: float = Field(gt=0)
    restart_bias: RestartBias = RestartBias.NONE

    @property
    def object_parts(self) -> Set[str]:
        return {obj_part for obj_part, _ in self.part_pairs}

    @property
    def human_parts(self) -> Set[str]:
        return {human_part for _, human_part in self.part_pairs}


class CategoryStats(BaseModel):
    """Scale prior means used by the scale loss."""

    mean_scales: Dict[str, float]
    human_mean: float = 1.0
    human_variance_weight: float = Field(default_factory=lambda: settings.human_scale_weight, ge=0)

    @classmethod
    def from_table(cls, table: Mapping[str, CategoryConfig]) -> "CategoryStats":
        return cls(mean_scales={name: row.mean_scale for name, row in table.items()})

    def mean_for(self, category: str) -> float:
        if category not in self.mean_scales:
            raise ConfigurationError(f"no mean scale for category '{category}'")
        return self.mean_scales[category]

    def with_means(self, means: Mapping[str, float]) -> "CategoryStats":
        merged = dict(self.mean_scales)
        merged.update(means)
        return self.model_copy(update={"mean_scales": merged})


_PALMS = ["L Palm", "R Palm"]
_FEET = ["L Foot", "R Foot"]


def default_category_table() -> Dict[str, CategoryConfig]:
    """Built-in table for the eight shipped categories.

    Mean scales are metric lengths of the longest side of a unit-normalized mesh.
    """
    rows = [
        CategoryConfig(
            name="bat", coarse_xy_expand=0.5, fine_xy_expand=2.5, z_depth_threshold=5,
            part_pairs=[("Handle", p) for p in _PALMS], mean_scale=0.9,
        ),
        CategoryConfig(
            name="bench", coarse_xy_expand=0.3, fine_xy_expand=0.5, z_depth_threshold=10,
            part_pairs=[("Seat", "Butt"), ("Seat Back", "Back")], mean_scale=1.5,
            restart_bias=RestartBias.UPRIGHT,
        ),
        CategoryConfig(
            name="bicycle", coarse_xy_expand=0, fine_xy_expand=0.7, z_depth_threshold=4,
            part_pairs=[("Seat", "Butt")] + [("Handlebars", p) for p in _PALMS], mean_scale=2.0,
            restart_bias=RestartBias.UPRIGHT,
        ),
        CategoryConfig(
            name="laptop", coarse_xy_expand=0.2, fine_xy_expand=0, z_depth_threshold=2.5,
            part_pairs=[("Laptop", p) for p in _PALMS], mean_scale=0.35,
        ),
        CategoryConfig(
            name="motorcycle", coarse_xy_expand=0, fine_xy_expand=0.7, z_depth_threshold=5,
            part_pairs=[("Seat", "Butt")] + [("Handlebars", p) for p in _PALMS], mean_scale=2.1,
            restart_bias=RestartBias.UPRIGHT,
        ),
        CategoryConfig(
            name="skateboard", coarse_xy_expand=0, fine_xy_expand=0.5, z_depth_threshold=10,
            part_pairs=[("Skateboard", p) for p in _FEET], mean_scale=0.8,
        ),
        CategoryConfig(
            name="surfboard", coarse_xy_expand=0.8, fine_xy_expand=0.2, z_depth_threshold=50,
            part_pairs=[("Surfboard", p) for p in _FEET + _PALMS], mean_scale=2.1,
        ),
        CategoryConfig(
            name="tennis_racket", coarse_xy_expand=0.4, fine_xy_expand=2, z_depth_threshold=5,
            part_pairs=[("Handle", p) for p in _PALMS], mean_scale=0.68,
        ),
    ]
    return {row.name: row for row in rows}


def load_category_profiles(profiles_dir: str = "config/categories") -> Dict[str, CategoryConfig]:
    """Load category rows from YAML profiles, one category per file."""
    profiles: Dict[str, CategoryConfig] = {}

    if os.path.exists(profiles_dir):
        for filename in sorted(os.listdir(profiles_dir)):
            if filename.endswith('.yaml') or filename.endswith('.yml'):
                profile_path = os.path.join(profiles_dir, filename)
                try:
                    with open(profile_path, 'r') as f:
                        profile = yaml.safe_load(f)
                    row = CategoryConfig(**profile.get('category', {}))
                    profiles[row.name] = row
                    logger.info(f"Loaded category profile: {row.name}")
                except (OSError, yaml.YAMLError, ValidationError, AttributeError) as e:
                    logger.error(f"Failed to load category profile {filename}: {e}")

    return profiles


def merge_category_tables(
    base: Mapping[str, CategoryConfig], *overrides: Mapping[str, CategoryConfig]
) -> Dict[str, CategoryConfig]:
    """Later tables replace whole rows of earlier ones."""
    merged = dict(base)
    for table in overrides:
        merged.update(table)
    return merged


def validate_part_names(
    table: Mapping[str, CategoryConfig],
    object_parts: Mapping[str, Iterable[Set[str]]],
    human_parts: Set[str],
    source: Optional[str] = None,
) -> None:
    """Check every part pair against the annotated mesh parts.

    ``object_parts`` maps a category to the part-name sets of its exemplars.
    """
    for name, row in table.items():
        if name not in object_parts:
            continue
        for k, exemplar_parts in enumerate(object_parts[name]):
            missing = row.object_parts - set(exemplar_parts)
            if missing:
                raise ConfigurationError(
                    f"category '{name}' exemplar {k} lacks parts {sorted(missing)}", path=source
                )
        missing_human = row.human_parts - set(human_parts)
        if missing_human:
            raise ConfigurationError(
                f"category '{name}' references human parts {sorted(missing_human)} "
                f"not annotated on the human mesh",
                path=source,
            )
