"""Image I/O, coordinate grids and synthetic test signals.

Images are ``(height, width, channels)`` float arrays with values in [0, 1]
and 1 or 3 channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigurationError


@dataclass
class RegressionDataset:
    coords: np.ndarray  # (n, 2) in [-1, 1], row-major pixel order
    targets: np.ndarray  # (n, c) in [-1, 1]
    image: np.ndarray

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.image.shape

    def to_image(self, outputs) -> np.ndarray:
        """Map network outputs back to a clamped [0, 1] image."""
        h, w, c = self.image.shape
        return outputs_to_image(outputs, h, w, c)


def outputs_to_image(outputs, height: int, width: int, channels: int) -> np.ndarray:
    out = np.asarray(outputs)
    img = (out.reshape(height, width, channels) + 1) / 2
    return np.clip(img, 0.0, 1.0)


def as_image(a) -> np.ndarray:
    img = np.asarray(a, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ConfigurationError(f"expected (H, W, 1|3) image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ConfigurationError("image contains non-finite values")
    return np.clip(img, 0.0, 1.0)


def load_image(path) -> np.ndarray:
    """Read a PNG or PPM file into a [0, 1] float image (1 or 3 channels)."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("1", "L", "I;16", "I", "F", "LA"):
                im = im.convert("L")
            elif mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    img = arr.astype(np.float64) / 255.0
    return as_image(img)


def save_image(path, img) -> None:
    """Write an image as 8-bit PNG or binary PPM, chosen by file suffix."""
    img = as_image(img)
    u8 = np.round(img * 255.0).astype(np.uint8)
    path = Path(path)
    fmt = "PPM" if path.suffix.lower() in (".ppm", ".pnm") else "PNG"
    if u8.shape[2] == 1:
        if fmt == "PPM":
            u8 = np.repeat(u8, 3, axis=2)
            pil = Image.fromarray(u8, "RGB")
        else:
            pil = Image.fromarray(u8[:, :, 0], "L")
    else:
        pil = Image.fromarray(u8, "RGB")
    pil.save(path, format=fmt)


def coordinate_grid(height: int, width: int) -> np.ndarray:
    if height < 2 or width < 2:
        raise ConfigurationError(f"image must be at least 2x2, got {height}x{width}")
    rows = 2.0 * np.arange(height) / (height - 1) - 1.0
    cols = 2.0 * np.arange(width) / (width - 1) - 1.0
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.stack([rr.ravel(), cc.ravel()], axis=1)


def make_dataset(img) -> RegressionDataset:
    img = as_image(img)
    h, w, c = img.shape
    coords = coordinate_grid(h, w)
    targets = 2.0 * img.reshape(h * w, c) - 1.0
    return RegressionDataset(coords, targets, img)


def synthetic_signal(kind: str, size: int, channels: int = 3, value: float = 0.5, cells: int = 4):
    """Deterministic analytic test images.

    ``constant`` fills with ``value``; ``gradient_ramp`` rises linearly from
    0 at the left column to 1 at the right; ``checkerboard`` alternates 0/1
    squares, ``cells`` per side.
    """
    if size < 2:
        raise ConfigurationError("size must be >= 2")
    if kind == "constant":
        img = np.full((size, size), float(value))
    elif kind == "gradient_ramp":
        img = np.tile(np.arange(size) / (size - 1), (size, 1))
    elif kind == "checkerboard":
        cell = max(1, size // cells)
        idx = np.arange(size) // cell
        img = ((idx[:, None] + idx[None, :]) % 2).astype(np.float64)
    else:
        raise ConfigurationError(f"unknown synthetic signal {kind!r}")
    return np.repeat(img[:, :, None], channels, axis=2)
