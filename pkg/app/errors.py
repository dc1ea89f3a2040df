"""
Exception hierarchy for Scene Arrange.
Every error carries the CLI exit code it maps to.
"""

from pathlib import Path
from typing import Optional, Union


class SceneArrangeError(Exception):
    """Base class for all Scene Arrange errors."""

    exit_code = 2


class InvalidParameterError(SceneArrangeError):
    """A numeric parameter is outside its valid domain."""


class BehindCameraError(SceneArrangeError):
    """A point to project lies on or behind the camera plane."""


class MeshLookupError(SceneArrangeError, LookupError):
    """Unknown category or exemplar index."""


class DimensionMismatchError(SceneArrangeError):
    """Two grids that must be registered have different sizes."""


class NumericalFailureError(SceneArrangeError):
    """An optimization produced no finite result."""

    exit_code = 3


class ConfigurationError(SceneArrangeError):
    """Invalid configuration, reported with file and line context."""

    def __init__(self, message: str, path: Optional[Union[str, Path]] = None, line: Optional[int] = None):
        self.path = str(path) if path is not None else None
        self.line = line
        location = ""
        if self.path:
            location = f"{self.path}:{line}: " if line is not None else f"{self.path}: "
        super().__init__(f"{location}{message}")


class MissingFileError(ConfigurationError):
    """A file referenced by a configuration does not exist."""

    def __init__(self, path: Union[str, Path], referenced_from: Optional[Union[str, Path]] = None, line: Optional[int] = None):
        self.missing = str(path)
        super().__init__(f"missing file {self.missing}", referenced_from, line)
