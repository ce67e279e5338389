"""Image loading and padded region cropping."""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingImageError


def load_image(path: str | Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (FileNotFoundError, OSError) as exc:
        raise MissingImageError(f"cannot read image {path}: {exc}") from exc


def crop_region(
    image: np.ndarray,
    bbox: tuple[float, float, float, float],
    pad_frac: float = 0.1,
    resize: int = 64,
) -> np.ndarray:
    """Crop (x, y, w, h) padded by ``pad_frac`` per side, resized to a square.

    The padded window is clipped to the image; degenerate boxes fall back to
    a single-pixel window so every annotation yields a crop.
    """
    h_img, w_img = image.shape[:2]
    x, y, w, h = bbox
    pad_x = pad_frac * w
    pad_y = pad_frac * h
    x1 = int(np.clip(np.floor(x - pad_x), 0, max(w_img - 1, 0)))
    y1 = int(np.clip(np.floor(y - pad_y), 0, max(h_img - 1, 0)))
    x2 = int(np.clip(np.ceil(x + w + pad_x), x1 + 1, w_img))
    y2 = int(np.clip(np.ceil(y + h + pad_y), y1 + 1, h_img))
    window = image[y1:y2, x1:x2]
    pil = Image.fromarray(window)
    return np.asarray(pil.resize((resize, resize), Image.BILINEAR))
