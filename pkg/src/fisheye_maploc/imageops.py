"""Grayscale image helpers: 8-bit PNG/PGM I/O and bilinear sampling."""

from pathlib import Path

import numpy as np
from PIL import Image

from .exceptions import InputError

__all__ = ["load_gray", "save_gray", "bilinear_sample"]


def load_gray(path: str | Path) -> np.ndarray:
    """Load an 8-bit grayscale PNG/PGM as a (H, W) uint8 array."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"image file not found: {path}")
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "I;16", "1", "P"):
                raise InputError(
                    f"image {path} has mode {im.mode}; expected 8-bit grayscale")
            arr = np.asarray(im.convert("L"), dtype=np.uint8)
    except InputError:
        raise
    except Exception as exc:
        raise InputError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0:
        raise InputError(f"image {path} is empty")
    return arr


def save_gray(path: str | Path, image: np.ndarray) -> None:
    image = np.asarray(image)
    if image.dtype != np.uint8 or image.ndim != 2:
        raise InputError("save_gray expects a (H, W) uint8 array")
    Image.fromarray(image, mode="L").save(Path(path))


def bilinear_sample(image: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinearly interpolate `image` at pixel coordinates (u=col, v=row).

    Coordinates must lie in [0, W-1] x [0, H-1]; the caller filters first.
    Returns float64 samples.
    """
    img = np.asarray(image, dtype=np.float64)
    h, w = img.shape
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    iu = np.clip(u.astype(np.int64), 0, w - 2)
    iv = np.clip(v.astype(np.int64), 0, h - 2)
    fu = u - iu
    fv = v - iv
    top = (1.0 - fu) * img[iv, iu] + fu * img[iv, iu + 1]
    bot = (1.0 - fu) * img[iv + 1, iu] + fu * img[iv + 1, iu + 1]
    return (1.0 - fv) * top + fv * bot
