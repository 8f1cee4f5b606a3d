"""Image representation, masked patch composition, and differentiable preprocessing.

Images are float64 numpy arrays of shape (H, W, 3) with intensities in [0, 1].
Binary masks are (H, W) arrays with values in {0, 1}. A mask selects which
pixels the attack may perturb; one masked pixel perturbs all three channels but
counts once toward the l0 budget.

Every operation here is pure, and the resize/normalize preprocessing is linear,
so exact gradients are available as transposed applications of the same
interpolation weights (see :func:`preprocess_vjp`).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from PIL import Image


def as_image(arr: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate and return an (H, W, 3) float image with values in [0, 1]."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive spatial dims, got {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def as_mask(arr: np.ndarray, name: str = "mask") -> np.ndarray:
    """Validate and return an (H, W) mask with values in {0, 1}."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"{name} must have shape (H, W), got {arr.shape}")
    vals = np.unique(arr)
    if not np.all(np.isin(vals, (0, 1))):
        raise ValueError(f"{name} values must be exactly 0 or 1")
    return arr.astype(np.uint8)


def apply_patch(image: np.ndarray, patch: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Composite a patch onto an image under a binary mask.

    Returns ``image * (1 - mask) + patch * mask`` with the mask broadcast
    across channels. Off-mask pixels are copied from the image exactly;
    on-mask pixels are copied from the patch exactly, so the gradient with
    respect to the patch is the mask itself.
    """
    image = np.asarray(image, dtype=np.float64)
    patch = np.asarray(patch, dtype=np.float64)
    mask = np.asarray(mask)
    if image.shape != patch.shape:
        raise ValueError(
            f"image and patch shapes differ: {image.shape} vs {patch.shape}"
        )
    if mask.shape != image.shape[:2]:
        raise ValueError(
            f"mask shape {mask.shape} does not match image spatial dims "
            f"{image.shape[:2]}"
        )
    m = (mask != 0)[..., None]
    return np.where(m, patch, image)


@dataclass(frozen=True)
class PreprocessSpec:
    """Detector-side preprocessing: bilinear resize then per-channel normalize.

    ``scale`` entries must be strictly positive. ``interpolation`` only
    supports bilinear; it is recorded so serialized configs stay explicit.
    """

    target_height: int
    target_width: int
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    scale: tuple[float, float, float] = (1.0, 1.0, 1.0)
    interpolation: str = "bilinear"

    def __post_init__(self) -> None:
        if self.target_height < 1 or self.target_width < 1:
            raise ValueError("target dims must be >= 1")
        if any(s <= 0 for s in self.scale):
            raise ValueError("scale components must be strictly positive")
        if self.interpolation != "bilinear":
            raise ValueError(f"unsupported interpolation {self.interpolation!r}")


@lru_cache(maxsize=64)
def _interp_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Row-stochastic 1-D bilinear interpolation matrix (n_out, n_in).

    Uses half-pixel sample centers: out index o samples source coordinate
    (o + 0.5) * n_in / n_out - 0.5, clamped to the valid range. For
    n_out == n_in this is exactly the identity.
    """
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1.0)
    i0 = np.floor(src).astype(np.intp)
    i0 = np.minimum(i0, n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    frac = src - i0
    w = np.zeros((n_out, n_in), dtype=np.float64)
    rows = np.arange(n_out)
    np.add.at(w, (rows, i0), 1.0 - frac)
    np.add.at(w, (rows, i1), frac)
    return w


def _apply_separable(image: np.ndarray, wr: np.ndarray, wc: np.ndarray) -> np.ndarray:
    """Apply row/column weight matrices to an (H, W, C) array via BLAS matmuls."""
    h, w, c = image.shape
    out = wr @ image.reshape(h, w * c)
    out = out.reshape(wr.shape[0], w, c).transpose(0, 2, 1).reshape(-1, w)
    out = out @ wc.T
    return out.reshape(wr.shape[0], c, wc.shape[0]).transpose(0, 2, 1)


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an (H, W, C) or (H, W) array to (out_h, out_w)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("target dims must be >= 1")
    image = np.asarray(image, dtype=np.float64)
    squeeze = image.ndim == 2
    if squeeze:
        image = image[..., None]
    wr = _interp_matrix(out_h, image.shape[0])
    wc = _interp_matrix(out_w, image.shape[1])
    out = _apply_separable(image, wr, wc)
    return out[..., 0] if squeeze else out


def resize_bilinear_vjp(
    grad_out: np.ndarray, in_h: int, in_w: int
) -> np.ndarray:
    """Gradient of :func:`resize_bilinear` with respect to its input.

    The resize is linear, so the pullback is the transposed interpolation.
    """
    grad_out = np.asarray(grad_out, dtype=np.float64)
    squeeze = grad_out.ndim == 2
    if squeeze:
        grad_out = grad_out[..., None]
    wr = _interp_matrix(grad_out.shape[0], in_h)
    wc = _interp_matrix(grad_out.shape[1], in_w)
    g = _apply_separable(grad_out, wr.T, wc.T)
    return g[..., 0] if squeeze else g


def preprocess(image: np.ndarray, spec: PreprocessSpec) -> np.ndarray:
    """Resize then normalize: ``(resize(image) - mean) / scale``.

    Runs inside the attack's differentiation path; use
    :func:`preprocess_vjp` to pull gradients back to input pixels.
    """
    image = np.asarray(image, dtype=np.float64)
    out = resize_bilinear(image, spec.target_height, spec.target_width)
    mean = np.asarray(spec.mean, dtype=np.float64)
    scale = np.asarray(spec.scale, dtype=np.float64)
    return (out - mean) / scale


def preprocess_vjp(
    grad_out: np.ndarray, spec: PreprocessSpec, in_h: int, in_w: int
) -> np.ndarray:
    """Pull a gradient at the preprocessed output back to the input image."""
    scale = np.asarray(spec.scale, dtype=np.float64)
    return resize_bilinear_vjp(np.asarray(grad_out) / scale, in_h, in_w)


def quantize_patch(patch: np.ndarray) -> np.ndarray:
    """Snap every value in [0, 1] to the nearest integer multiple of 1/255.

    Rounds half up, is idempotent, and commutes exactly with an 8-bit
    encode/decode round trip.
    """
    patch = np.asarray(patch, dtype=np.float64)
    return np.floor(patch * 255.0 + 0.5) / 255.0


def is_quantized(arr: np.ndarray, tol: float = 0.0) -> bool:
    """True if every value equals an integer multiple of 1/255 (within tol)."""
    arr = np.asarray(arr, dtype=np.float64)
    k = np.floor(arr * 255.0 + 0.5)
    return bool(np.all(np.abs(arr - k / 255.0) <= tol))


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Encode [0, 1] intensities to 8-bit, rounding half up."""
    image = np.asarray(image, dtype=np.float64)
    return np.floor(image * 255.0 + 0.5).clip(0, 255).astype(np.uint8)


def from_uint8(data: np.ndarray) -> np.ndarray:
    """Decode 8-bit values to [0, 1]: byte b maps to b/255 exactly."""
    return np.asarray(data, dtype=np.float64) / 255.0


def save_image(path: str | Path, image: np.ndarray) -> None:
    """Write an image as lossless 8-bit RGB PNG."""
    arr = to_uint8(as_image(image))
    Image.fromarray(arr, mode="RGB").save(str(path), format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    """Read a PNG (or other lossless raster) as an (H, W, 3) [0, 1] image."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return from_uint8(arr)


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a binary mask as single-channel PNG with values {0, 255}."""
    m = as_mask(mask)
    Image.fromarray((m * 255).astype(np.uint8), mode="L").save(
        str(path), format="PNG"
    )


def load_mask(path: str | Path) -> np.ndarray:
    """Read a {0, 255} single-channel PNG back to a {0, 1} mask."""
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("L"), dtype=np.uint8)
    return (arr >= 128).astype(np.uint8)
