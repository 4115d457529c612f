"""8-bit PNG in/out for render targets."""

from __future__ import annotations

import numpy as np
from PIL import Image


def save_png(path, img: np.ndarray) -> None:
    """Write a float (H, W, 3) image in [0, 1] as 8-bit RGB."""
    arr = np.clip(np.asarray(img), 0.0, 1.0)
    Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8), mode="RGB").save(path)


def load_png(path, dtype=np.float32) -> np.ndarray:
    arr = np.asarray(Image.open(path).convert("RGB"), dtype=dtype)
    return arr / dtype(255.0)
