"""
YAML documents that remember where each value came from.
"""

import logging
from pathlib import Path
from typing import Any, Optional, Tuple, Union

import yaml

from ..errors import ConfigurationError, MissingFileError

logger = logging.getLogger(__name__)


class YamlSource:
    """Parsed YAML plus its node tree, for file:line diagnostics."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        if not self.path.exists():
            raise MissingFileError(self.path)
        with open(self.path, 'r') as f:
            text = f.read()
        try:
            self.data = yaml.safe_load(text) or {}
            self._root = yaml.compose(text)
        except yaml.MarkedYAMLError as e:
            line = e.problem_mark.line + 1 if e.problem_mark is not None else None
            raise ConfigurationError(f"invalid YAML: {e.problem}", path=self.path, line=line)
        except yaml.YAMLError as e:
            raise ConfigurationError(f"invalid YAML: {e}", path=self.path)
        if not isinstance(self.data, dict):
            raise ConfigurationError("top level must be a mapping", path=self.path, line=1)

    @property
    def directory(self) -> Path:
        return self.path.parent

    def line_of(self, *keys: Union[str, int]) -> Optional[int]:
        """1-based line of the value at a key path; the closest known ancestor if missing."""
        node = self._root
        line = node.start_mark.line + 1 if node is not None else None
        for key in keys:
            child = _child(node, key)
            if child is None:
                break
            node = child
            line = node.start_mark.line + 1
        return line

    def error(self, message: str, *keys: Union[str, int]) -> ConfigurationError:
        return ConfigurationError(message, path=self.path, line=self.line_of(*keys))

    def resolve(self, relative: str, *keys: Union[str, int]) -> Path:
        """Path relative to this file, which must exist."""
        path = Path(relative)
        if not path.is_absolute():
            path = self.directory / path
        if not path.exists():
            raise MissingFileError(path, referenced_from=self.path, line=self.line_of(*keys))
        return path

    def location(self, *keys: Union[str, int]) -> Tuple[str, Optional[int]]:
        return str(self.path), self.line_of(*keys)


def _child(node: Any, key: Union[str, int]) -> Any:
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            if key_node.value == key:
                return value_node
    elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and 0 <= key < len(node.value):
        return node.value[key]
    return None
