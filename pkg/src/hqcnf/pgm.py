"""Binary PGM (P5) output."""
from __future__ import annotations

import numpy as np

__all__ = ["encode_pgm", "write_pgm", "contact_sheet"]


def encode_pgm(image):
    """P5 bytes, maxval 255, pixel = round(clamp(x, 0, 1) * 255)."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError(f"PGM needs a 2-D image, got shape {img.shape}")
    pix = np.rint(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def write_pgm(path, image):
    with open(path, "wb") as fh:
        fh.write(encode_pgm(image))


def contact_sheet(images, cols=8, pad=1):
    """Tile images into rows of ``cols`` with a ``pad``-pixel black border."""
    images = np.asarray(images, dtype=np.float64)
    n, h, w = images.shape
    rows = max(1, -(-n // cols))
    sheet = np.zeros((rows * (h + pad) + pad, cols * (w + pad) + pad))
    for i, img in enumerate(images):
        r, c = divmod(i, cols)
        y, x = pad + r * (h + pad), pad + c * (w + pad)
        sheet[y:y + h, x:x + w] = img
    return sheet
