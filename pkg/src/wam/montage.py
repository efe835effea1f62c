"""Binary PGM output and image-tile montages.

PGM (P5) keeps the artifacts dependency-free and bit-exact: an 8-bit
grayscale header plus raw bytes, readable by any image viewer.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import CorruptHeaderError, TruncatedPayloadError

__all__ = ["write_pgm", "read_pgm", "montage"]

SEPARATOR_PX = 2
SEPARATOR_VALUE = 64


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a 2-d uint8 array as a binary (P5) PGM file."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError(f"expected a 2-d image, got shape {image.shape}")
    if image.dtype != np.uint8:
        raise ValueError(f"expected uint8 pixels, got {image.dtype}")
    h, w = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Read a binary PGM written by :func:`write_pgm`."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise CorruptHeaderError(f"{path}: not a binary PGM")
    try:
        w, h = map(int, parts[1].split())
        maxval = int(parts[2])
    except ValueError:
        raise CorruptHeaderError(f"{path}: malformed PGM header") from None
    if maxval != 255:
        raise CorruptHeaderError(f"{path}: expected 8-bit pixels, maxval {maxval}")
    pixels = parts[3]
    if len(pixels) < w * h:
        raise TruncatedPayloadError(f"{path}: {len(pixels)} pixel bytes, expected {w * h}")
    return np.frombuffer(pixels[: w * h], dtype=np.uint8).reshape(h, w)


def montage(tiles: Sequence[np.ndarray], cols: int) -> np.ndarray:
    """Arrange equal-shaped [0, 1] grayscale tiles row-major into one uint8 image.

    Tiles are separated by 2-pixel mid-gray gutters; an incomplete final row
    is padded with black tiles.
    """
    if not len(tiles):
        raise ValueError("montage of zero tiles")
    if cols <= 0:
        raise ValueError(f"cols must be positive, got {cols}")
    th, tw = tiles[0].shape
    for t in tiles:
        if t.shape != (th, tw):
            raise ValueError(f"tile shapes differ: {t.shape} vs {(th, tw)}")
    rows = (len(tiles) + cols - 1) // cols
    sep = SEPARATOR_PX
    canvas = np.full(
        (rows * th + (rows - 1) * sep, cols * tw + (cols - 1) * sep),
        SEPARATOR_VALUE,
        dtype=np.uint8,
    )
    for idx, tile in enumerate(tiles):
        r, c = divmod(idx, cols)
        y, x = r * (th + sep), c * (tw + sep)
        canvas[y:y + th, x:x + tw] = np.rint(np.clip(tile, 0.0, 1.0) * 255.0).astype(np.uint8)
    # blank out pad positions so partial rows read as empty tiles
    for idx in range(len(tiles), rows * cols):
        r, c = divmod(idx, cols)
        y, x = r * (th + sep), c * (tw + sep)
        canvas[y:y + th, x:x + tw] = 0
    return canvas
