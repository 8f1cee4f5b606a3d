"""Cross-shaped object patterns shared by the toy detectors and scene synthesis.

The toy detectors respond to bright, thin crosses whose size tracks the
detector's grid cell, so a pattern planted at any image resolution presents
the same footprint after the detector's resize.
"""

from __future__ import annotations

import numpy as np


# a detector cell is viewed at roughly this many pixels after its resize;
# crosses must stay visible through that downscale
VIEW_CELL = 15


def cross_pattern(size: int) -> np.ndarray:
    """Binary cross on a (size, size) field; arms reach 45% of the field.

    Bars are 1 px thick for small cells and widen with the cell-to-view
    downscale factor, because plain bilinear downsampling skips source rows
    once the scale factor drops below 1/2: a bar narrower than the sampling
    stride can vanish between sample points.
    """
    if size < 3:
        raise ValueError(f"pattern size must be >= 3, got {size}")
    stride = size / VIEW_CELL
    t = 1 if stride <= 2.0 else int(round(stride + 2.0))
    if t % 2 == 0:
        t += 1
    arm = int(round(0.45 * size))
    c = size // 2
    h = (t - 1) // 2
    pat = np.zeros((size, size), dtype=np.float64)
    pat[max(c - h, 0):c + h + 1, max(c - arm, 0):c + arm + 1] = 1.0
    pat[max(c - arm, 0):c + arm + 1, max(c - h, 0):c + h + 1] = 1.0
    return pat


def plant(image: np.ndarray, center: tuple[int, int], pattern: np.ndarray,
          brightness: float = 1.0) -> None:
    """Stamp a pattern onto an image in place, centered at a pixel.

    Pattern pixels > 0 overwrite all three channels with ``brightness``;
    out-of-bounds parts are clipped.
    """
    ph, pw = pattern.shape
    r0 = center[0] - (ph - 1) // 2
    c0 = center[1] - (pw - 1) // 2
    h, w = image.shape[:2]
    rs, cs = max(r0, 0), max(c0, 0)
    re, ce = min(r0 + ph, h), min(c0 + pw, w)
    if rs >= re or cs >= ce:
        return
    sub = pattern[rs - r0:re - r0, cs - c0:ce - c0] > 0
    region = image[rs:re, cs:ce]
    region[sub] = brightness
