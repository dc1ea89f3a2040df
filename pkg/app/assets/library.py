"""
Object mesh library and its YAML manifest.

    categories:
      bat:
        exemplars:
          - procedural: bat
          - mesh: meshes/bat_1.obj
            parts: meshes/bat_1.parts
        config:
          mean_scale: 0.9

``config`` overrides fields of the built-in category row; a category without
a built-in row must give a complete one.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Set, Union

from pydantic import BaseModel, Field, ValidationError, model_validator

from ..config.categories import (
    CategoryConfig,
    default_category_table,
    load_category_profiles,
    merge_category_tables,
    validate_part_names,
)
from ..config.yaml_source import YamlSource
from ..errors import ConfigurationError, MeshLookupError
from ..geometry.mesh import TriMesh
from .mesh_io import load_mesh
from .procedural import procedural_human, procedural_library, procedural_object

logger = logging.getLogger(__name__)


class ExemplarEntry(BaseModel):
    mesh: Optional[str] = None
    parts: Optional[str] = None
    procedural: Optional[str] = None
    variant: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "ExemplarEntry":
        if (self.mesh is None) == (self.procedural is None):
            raise ValueError("an exemplar needs exactly one of 'mesh' or 'procedural'")
        return self


class CategoryEntry(BaseModel):
    exemplars: List[ExemplarEntry] = Field(min_length=1)
    config: Dict[str, Any] = Field(default_factory=dict)


class LibraryManifest(BaseModel):
    categories: Dict[str, CategoryEntry]


class MeshLibrary:
    """Exemplar meshes per category plus the category table that goes with them."""

    def __init__(
        self,
        meshes: Mapping[str, List[TriMesh]],
        table: Optional[Mapping[str, CategoryConfig]] = None,
        source: Optional[str] = None,
    ):
        self._meshes = {name: list(exemplars) for name, exemplars in meshes.items()}
        self.table: Dict[str, CategoryConfig] = dict(table) if table is not None else default_category_table()
        self.source = source

    @property
    def categories(self) -> List[str]:
        return sorted(self._meshes)

    def has(self, category: str) -> bool:
        return category in self._meshes

    def exemplars(self, category: str) -> List[TriMesh]:
        if category not in self._meshes:
            raise MeshLookupError(f"unknown category '{category}'")
        return self._meshes[category]

    def exemplar_count(self, category: str) -> int:
        return len(self.exemplars(category))

    def get(self, category: str, exemplar: int = 0) -> TriMesh:
        exemplars = self.exemplars(category)
        if not 0 <= exemplar < len(exemplars):
            raise MeshLookupError(f"category '{category}' has {len(exemplars)} exemplars, asked for {exemplar}")
        return exemplars[exemplar]

    def config_for(self, category: str) -> CategoryConfig:
        if category not in self.table:
            raise MeshLookupError(f"no category configuration for '{category}'")
        return self.table[category]

    def part_names(self) -> Dict[str, List[Set[str]]]:
        return {name: [set(m.parts) for m in exemplars] for name, exemplars in self._meshes.items()}

    def validate_parts(self, human_parts: Set[str], rows: Optional[Mapping[str, CategoryConfig]] = None) -> None:
        """Check the part pairs of ``rows`` (the library table by default) against exemplar and human parts.

        Errors carry the library source only when its own table is checked.
        """
        checked = self.table if rows is None else rows
        validate_part_names(
            {name: row for name, row in checked.items() if name in self._meshes},
            self.part_names(),
            human_parts,
            source=self.source if rows is None else None,
        )

    @classmethod
    def procedural(cls) -> "MeshLibrary":
        """The shipped stand-in library for the eight built-in categories."""
        table = merge_category_tables(default_category_table(), load_category_profiles())
        library = cls(procedural_library(), table, source="procedural")
        library.validate_parts(set(procedural_human().parts))
        return library


def load_library(path: Optional[Union[str, Path]] = None) -> MeshLibrary:
    """Load a manifest; without one, the procedural library."""
    if path is None:
        return MeshLibrary.procedural()

    source = YamlSource(path)
    try:
        manifest = LibraryManifest(**source.data)
    except ValidationError as e:
        first = e.errors()[0]
        raise source.error(f"invalid library manifest: {first['msg']}", *first["loc"])

    table = merge_category_tables(default_category_table(), load_category_profiles())
    meshes: Dict[str, List[TriMesh]] = {}
    for name, entry in manifest.categories.items():
        exemplars = []
        for k, exemplar in enumerate(entry.exemplars):
            keys = ("categories", name, "exemplars", k)
            if exemplar.procedural is not None:
                try:
                    exemplars.append(procedural_object(exemplar.procedural, exemplar.variant))
                except MeshLookupError as e:
                    raise source.error(str(e), *keys)
            else:
                mesh_path = source.resolve(exemplar.mesh, *keys, "mesh")
                parts_path = source.resolve(exemplar.parts, *keys, "parts") if exemplar.parts else None
                exemplars.append(load_mesh(mesh_path, parts_path, name=f"{name}_{k}"))
        meshes[name] = exemplars

        if entry.config or name not in table:
            base = table[name].model_dump() if name in table else {}
            try:
                table[name] = CategoryConfig(**{**base, **entry.config, "name": name})
            except ValidationError as e:
                raise source.error(f"invalid category row for '{name}': {e.errors()[0]['msg']}", "categories", name)
        logger.info(f"Loaded category '{name}' with {len(exemplars)} exemplar(s)")

    return MeshLibrary(meshes, table, source=str(source.path))
