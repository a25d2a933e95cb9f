"""PNG exchange helpers.

Images travel as 8-bit RGB PNG with pixel values mapped linearly from
[-1, 1]; segmentation masks travel as indexed-palette PNG where the label id
is the palette index.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from maskedit.labels import LabelSchema


class ImageDecodeError(ValueError):
    """Raised when PNG bytes cannot be decoded into the expected form."""


def image_to_png_bytes(image: np.ndarray) -> bytes:
    """Encode an HxWx3 float image in [-1, 1] as 8-bit RGB PNG bytes."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected HxWx3 image, got shape {arr.shape}")
    u8 = np.clip(np.rint((arr + 1.0) * 127.5), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(u8, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_image(data: bytes) -> np.ndarray:
    """Decode PNG bytes to an HxWx3 float32 image in [-1, 1]."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            u8 = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"not a decodable PNG image: {exc}") from exc
    return (u8.astype(np.float32) / 127.5) - 1.0


def mask_to_png_bytes(mask: np.ndarray, schema: LabelSchema) -> bytes:
    """Encode an HxW integer label mask as an indexed-palette PNG."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"expected HxW mask, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() >= schema.num_labels:
        raise ValueError("mask contains label ids outside the schema")
    img = Image.fromarray(arr.astype(np.uint8), mode="P")
    img.putpalette(schema.flat_palette())
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_to_mask(data: bytes, num_labels: int | None = None) -> np.ndarray:
    """Decode an indexed-palette PNG into an HxW int64 label mask."""
    try:
        with Image.open(io.BytesIO(data)) as img:
            if img.mode != "P":
                raise ImageDecodeError(f"mask PNG must be palette-indexed, got mode {img.mode!r}")
            arr = np.asarray(img, dtype=np.int64)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageDecodeError(f"not a decodable PNG mask: {exc}") from exc
    if num_labels is not None and arr.size and arr.max() >= num_labels:
        raise ImageDecodeError(
            f"mask uses label id {int(arr.max())} outside the {num_labels}-label schema")
    return arr
