"""8-bit PNG I/O; float images in [0,1] everywhere else in the pipeline."""

import numpy as np
from PIL import Image as PILImage

from .errors import DimensionError

__all__ = ["read_image", "write_image", "read_mask", "write_mask",
           "to_uint8", "from_uint8"]


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64) / 255.0


def write_image(path, img: np.ndarray) -> None:
    img = np.asarray(img)
    if img.ndim == 2:
        pil = PILImage.fromarray(to_uint8(img), mode="L")
    elif img.ndim == 3 and img.shape[2] == 3:
        pil = PILImage.fromarray(to_uint8(img), mode="RGB")
    else:
        raise DimensionError(f"expected (H,W) or (H,W,3) image, got {img.shape}")
    pil.save(path, format="PNG")


def read_image(path) -> np.ndarray:
    with PILImage.open(path) as pil:
        arr = np.asarray(pil.convert("RGB"))
    return from_uint8(arr)


def write_mask(path, mask: np.ndarray) -> None:
    arr = (np.asarray(mask).astype(bool) * np.uint8(255))
    PILImage.fromarray(arr, mode="L").save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    with PILImage.open(path) as pil:
        arr = np.asarray(pil.convert("L"))
    return arr >= 128
