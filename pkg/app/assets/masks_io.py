"""
Instance masks on disk: 8-bit PNG (nonzero is foreground) or a run-length
text sidecar.

The RLE format is a ``width height`` header followed by alternating run
lengths over the row-major grid, starting with a background run.
"""

import logging
import re
from pathlib import Path
from typing import NamedTuple, Optional, Union

import numpy as np
from PIL import Image

from ..errors import ConfigurationError, MissingFileError
from ..scene.models import Mask

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

MASK_FILENAME = re.compile(r"^(?P<image>.+?)_(?P<instance>\d{3})_(?P<category>.+)\.(?P<ext>png|rle)$")


class MaskName(NamedTuple):
    image: str
    instance: int
    category: str


def mask_filename(image: str, instance: int, category: str, ext: str = "png") -> str:
    return f"{image}_{instance:03}_{category}.{ext}"


def parse_mask_filename(name: str) -> Optional[MaskName]:
    """Split ``{image}_{instance:03}_{category}.png``; None if it does not match."""
    match = MASK_FILENAME.match(Path(name).name)
    if match is None:
        return None
    return MaskName(match["image"], int(match["instance"]), match["category"])


def load_mask(path: PathLike) -> Mask:
    path = Path(path)
    if not path.exists():
        raise MissingFileError(path)
    if path.suffix.lower() == ".rle":
        return _load_rle(path)
    with Image.open(path) as image:
        data = np.asarray(image.convert("L"))
    return Mask(data > 0)


def save_mask(path: PathLike, mask: Mask) -> Path:
    path = Path(path)
    if path.suffix.lower() == ".rle":
        return _save_rle(path, mask)
    Image.fromarray((mask.data * 255).astype(np.uint8), mode="L").save(path)
    return path


def encode_rle(mask: Mask) -> str:
    flat = mask.data.reshape(-1)
    boundaries = np.concatenate([[0], np.flatnonzero(np.diff(flat)) + 1, [flat.size]])
    runs = np.diff(boundaries).tolist()
    if flat.size and flat[0] == 1:
        runs = [0] + runs
    return f"{mask.width} {mask.height}\n" + " ".join(str(r) for r in runs) + "\n"


def decode_rle(text: str, source: Optional[PathLike] = None) -> Mask:
    tokens = text.split()
    try:
        width, height = int(tokens[0]), int(tokens[1])
        runs = [int(t) for t in tokens[2:]]
    except (IndexError, ValueError) as e:
        raise ConfigurationError(f"malformed RLE mask: {e}", path=source)
    if sum(runs) != width * height:
        raise ConfigurationError(f"RLE runs cover {sum(runs)} pixels, expected {width * height}", path=source)
    values = np.repeat(np.arange(len(runs)) % 2, runs).astype(np.uint8)
    return Mask(values.reshape(height, width))


def _load_rle(path: Path) -> Mask:
    with open(path, "r") as f:
        return decode_rle(f.read(), source=path)


def _save_rle(path: Path, mask: Mask) -> Path:
    with open(path, "w") as f:
        f.write(encode_rle(mask))
    return path
