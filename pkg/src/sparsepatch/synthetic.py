"""Seeded synthetic scenes the toy detectors reliably detect.

Scenes are smooth, dim backgrounds with bright cross-shaped objects planted
at interior grid-cell centers of the one-stage detector. Pixel values are
quantized to the 1/255 lattice so scenes behave exactly like images decoded
from 8-bit PNG files.
"""

from __future__ import annotations

import numpy as np

from .imaging import quantize_patch
from .patterns import cross_pattern, plant
from .toydet import OS_GRID


def smooth_background(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Low-frequency dim texture in roughly [0.03, 0.30]."""
    yy = np.linspace(0.0, 1.0, height)[:, None]
    xx = np.linspace(0.0, 1.0, width)[None, :]
    field = np.zeros((height, width))
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 2.5, size=2)
        py, px = rng.uniform(0.0, 2.0 * np.pi, size=2)
        field += rng.uniform(0.02, 0.05) * np.sin(
            2.0 * np.pi * fy * yy + py
        ) * np.sin(2.0 * np.pi * fx * xx + px)
    base = rng.uniform(0.10, 0.16)
    tint = rng.uniform(0.9, 1.1, size=3)
    img = np.clip(base + field, 0.03, 0.30)[:, :, None] * tint
    return np.clip(img, 0.0, 0.35)


def make_scene(
    height: int,
    width: int,
    n_objects: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Build a scene with bright crosses at distinct interior grid cells.

    Returns the quantized image and the planted center pixels.
    """
    if n_objects > (OS_GRID - 2) ** 2:
        raise ValueError(f"at most {(OS_GRID - 2) ** 2} interior objects fit")
    img = smooth_background(height, width, rng)

    interior = [
        (i, j) for i in range(1, OS_GRID - 1) for j in range(1, OS_GRID - 1)
    ]
    picks = rng.choice(len(interior), size=n_objects, replace=False)
    cell_h = height / OS_GRID
    cell_w = width / OS_GRID
    size = int(round(min(cell_h, cell_w)))
    centers = []
    for k in picks:
        i, j = interior[int(k)]
        center = (int(round((i + 0.5) * cell_h)), int(round((j + 0.5) * cell_w)))
        plant(img, center, cross_pattern(size), brightness=float(rng.uniform(0.9, 1.0)))
        centers.append(center)
    return quantize_patch(img), centers
