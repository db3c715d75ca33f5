"""Binary PGM (P5) / PPM (P6) reading and writing.

Masks are stored as 0/255 PGM and thresholded at 128 on load; images travel
as float rasters in [0,1], quantized to 8 bits on save. Grayscale images use
PGM, 3-channel images PPM.
"""
from __future__ import annotations

import numpy as np

from .errors import DomainError, ShapeError

__all__ = [
    "load_pgm",
    "save_pgm",
    "load_ppm",
    "save_ppm",
    "load_mask",
    "save_mask",
    "load_image",
    "save_image",
]


def _read_header(fh, magic: bytes) -> tuple[int, int, int]:
    if fh.read(2) != magic:
        raise DomainError(f"not a {magic.decode()} file")
    fields: list[int] = []
    while len(fields) < 3:
        tok = b""
        ch = fh.read(1)
        while ch.isspace():
            ch = fh.read(1)
        if ch == b"#":
            fh.readline()
            continue
        while ch and not ch.isspace():
            tok += ch
            ch = fh.read(1)
        if not tok:
            raise DomainError("truncated raster header")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval < 1 or maxval > 255:
        raise DomainError(f"unsupported maxval {maxval}")
    return width, height, maxval


def load_pgm(path) -> np.ndarray:
    """Read a P5 grayscale raster as (H, W) uint8."""
    with open(path, "rb") as fh:
        width, height, _ = _read_header(fh, b"P5")
        data = fh.read(width * height)
    if len(data) != width * height:
        raise DomainError(f"truncated pixel data in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(path, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 2 or raster.dtype != np.uint8:
        raise ShapeError(f"PGM raster must be 2D uint8, got {raster.shape} {raster.dtype}")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def load_ppm(path) -> np.ndarray:
    """Read a P6 color raster as (H, W, 3) uint8."""
    with open(path, "rb") as fh:
        width, height, _ = _read_header(fh, b"P6")
        data = fh.read(width * height * 3)
    if len(data) != width * height * 3:
        raise DomainError(f"truncated pixel data in {path}")
    return np.frombuffer(data, dtype=np.uint8).reshape(height, width, 3).copy()


def save_ppm(path, raster: np.ndarray) -> None:
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] != 3 or raster.dtype != np.uint8:
        raise ShapeError(f"PPM raster must be (H,W,3) uint8, got {raster.shape} {raster.dtype}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{raster.shape[1]} {raster.shape[0]}\n255\n".encode("ascii"))
        fh.write(raster.tobytes())


def load_mask(path) -> np.ndarray:
    """PGM mask file -> {0,1} raster (threshold at 128)."""
    return (load_pgm(path) >= 128).astype(np.uint8)


def save_mask(path, mask: np.ndarray) -> None:
    mask = np.asarray(mask)
    if not np.all((mask == 0) | (mask == 1)):
        raise DomainError("mask values must be 0 or 1")
    save_pgm(path, (mask * 255).astype(np.uint8))


def load_image(path) -> np.ndarray:
    """Float image in [0,1]; (H,W) from PGM, (H,W,3) from PPM by suffix."""
    if str(path).endswith(".ppm"):
        return load_ppm(path).astype(np.float64) / 255.0
    return load_pgm(path).astype(np.float64) / 255.0


def save_image(path, image: np.ndarray) -> None:
    image = np.asarray(image, dtype=np.float64)
    quantized = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    if image.ndim == 2:
        save_pgm(path, quantized)
    elif image.ndim == 3 and image.shape[2] == 3:
        save_ppm(path, quantized)
    else:
        raise ShapeError(f"image must be (H,W) or (H,W,3), got {image.shape}")
