"""8-bit RGB image buffers and their on-disk representation.

Corrupted outputs are written as PNG (lossless) except for the jpeg
corruption, which is emitted as an actual JPEG file.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .validation import MIN_IMAGE_SIDE


@dataclass(frozen=True)
class ImageBuffer:
    """An RGB raster with a stable identifier; the unit of corruption work."""

    image_id: str
    pixels: np.ndarray  # (H, W, 3) uint8, row-major

    def __post_init__(self) -> None:
        px = self.pixels
        if px.ndim != 3 or px.shape[2] != 3:
            raise DataError(f"image {self.image_id!r}: expected HxWx3 pixels, got shape {px.shape}")
        if px.dtype != np.uint8:
            raise DataError(f"image {self.image_id!r}: expected uint8 samples, got {px.dtype}")
        if px.shape[0] < MIN_IMAGE_SIDE or px.shape[1] < MIN_IMAGE_SIDE:
            raise DataError(
                f"image {self.image_id!r}: {px.shape[1]}x{px.shape[0]} is below the "
                f"minimum size {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
            )

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def with_pixels(self, pixels: np.ndarray) -> "ImageBuffer":
        return ImageBuffer(self.image_id, pixels)


def load_image(path: str | Path, image_id: str | None = None) -> ImageBuffer:
    path = Path(path)
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    return ImageBuffer(image_id if image_id is not None else path.stem, arr)


def save_png(image: ImageBuffer, path: str | Path) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(Path(path), format="PNG")


def save_jpeg(image: ImageBuffer, path: str | Path, quality: int = 95) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(Path(path), format="JPEG", quality=quality)


def corrupted_filename(image_id: str, kind: str, level: int) -> str:
    """``<image_id>__<kind>__s<level>.<ext>``; jpeg corruption emits .jpg."""
    ext = "jpg" if kind == "jpeg" else "png"
    return f"{image_id}__{kind}__s{level}.{ext}"


def clean_filename(image_id: str) -> str:
    return f"{image_id}__clean__s0.png"
