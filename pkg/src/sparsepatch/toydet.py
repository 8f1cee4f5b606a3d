"""Two small, analytically differentiable detectors for desk-scale testing.

Both detectors share one feature: a zero-sum matched filter tuned to the
bright cross pattern of :mod:`sparsepatch.patterns`, so a planted object
drives a strong response at its grid cell while uniform regions score
exactly zero. All weights are deterministic constants derived from the
pattern itself; constructing an adapter twice yields identical numbers.

``ToyOneStage`` mimics a YOLO-style head: an 8x8 grid of disjoint cells,
per-cell sigmoid objectness and a softmax over 3 classes.

``ToyTwoStage`` mimics an R-CNN-style head: a dense 26x26 grid of
overlapping proposal windows (676 proposals, more than ten times the
one-stage count) with a softmax over 3 foreground classes plus background.
Its preprocessing uses a non-trivial mean/scale so normalization sits in
the gradient path.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .detectors import ONE_STAGE, TWO_STAGE, DetectorAdapter, RawScores, register_adapter
from .imaging import PreprocessSpec, preprocess, preprocess_vjp, resize_bilinear
from .patterns import cross_pattern, plant

N_CLASSES = 3
REFERENCE_SIZE = 160

# one-stage head
OS_SIDE = 120
OS_GRID = 8
OS_CELL = OS_SIDE // OS_GRID
OS_OBJ_BIAS = -2.0
OS_OBJ_SPAN = 5.0
OS_CLASS_GAINS = (2.5, 1.0, 0.0)
OS_KERNEL_BLUR = 0.7

# two-stage head
TS_SIDE = 112
TS_WINDOW = 12
TS_STRIDE = 4
TS_GRID = (TS_SIDE - TS_WINDOW) // TS_STRIDE + 1  # 26 -> 676 proposals
TS_FG_BIAS = -1.0
TS_BG_BIAS = 1.0
TS_FG_SPAN = 4.5
TS_FG1_RATIO = 0.4
TS_KERNEL_BLUR = 1.2


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-z))


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_vjp(probs: np.ndarray, d_probs: np.ndarray) -> np.ndarray:
    inner = (d_probs * probs).sum(axis=-1, keepdims=True)
    return probs * (d_probs - inner)


def _matched_filter(view: np.ndarray, blur_sigma: float) -> np.ndarray:
    """Zero-sum filter from a pattern's preprocessed appearance.

    Positive weights follow the (slightly blurred) pattern footprint and sum
    to +1; negative weights spread uniformly over the rest of the window and
    sum to -1, so any uniform input scores exactly zero.
    """
    blurred = ndimage.gaussian_filter(view, sigma=blur_sigma)
    pos = blurred / blurred.sum()
    off = blurred <= 0.02 * blurred.max()
    neg = off.astype(np.float64)
    neg /= neg.sum()
    return pos - neg


def _per_channel(filter_2d: np.ndarray) -> np.ndarray:
    """Replicate a 2-D filter across RGB so white patterns match any tint."""
    return np.repeat(filter_2d[:, :, None] / 3.0, 3, axis=2)


def _reference_image() -> np.ndarray:
    """Blank reference image with one pattern planted at an interior cell."""
    cell = REFERENCE_SIZE // OS_GRID
    img = np.zeros((REFERENCE_SIZE, REFERENCE_SIZE, 3), dtype=np.float64)
    center = (3 * cell + cell // 2, 3 * cell + cell // 2)
    plant(img, center, cross_pattern(cell))
    return img


class ToyOneStage(DetectorAdapter):
    """Grid detector: 64 disjoint cells, objectness + 3-class softmax."""

    name = "toy_one_stage"
    style = ONE_STAGE

    def __init__(self, score_threshold: float = 0.5, nms_iou: float = 0.5):
        self.score_threshold = float(score_threshold)
        self.nms_iou = float(nms_iou)
        self.preprocess_spec = PreprocessSpec(OS_SIDE, OS_SIDE)

        view = preprocess(_reference_image(), self.preprocess_spec)
        cell_view = view[3 * OS_CELL:4 * OS_CELL, 3 * OS_CELL:4 * OS_CELL]
        unit = _matched_filter(cell_view.mean(axis=2), OS_KERNEL_BLUR)
        # calibrate so the reference pattern lands at a fixed logit span
        response = float((cell_view.mean(axis=2) * unit).sum())
        self.kernel = _per_channel(unit / response)
        self.obj_bias = OS_OBJ_BIAS
        self.obj_gain = OS_OBJ_SPAN
        self.class_gains = np.asarray(OS_CLASS_GAINS, dtype=np.float64)

    def _boxes(self, h: int, w: int) -> np.ndarray:
        idx = np.arange(OS_GRID, dtype=np.float64)
        r0 = idx * h / OS_GRID
        c0 = idx * w / OS_GRID
        boxes = np.empty((OS_GRID, OS_GRID, 4))
        boxes[:, :, 0] = r0[:, None]
        boxes[:, :, 1] = c0[None, :]
        boxes[:, :, 2] = r0[:, None] + h / OS_GRID
        boxes[:, :, 3] = c0[None, :] + w / OS_GRID
        return boxes.reshape(-1, 4)

    def _forward(self, image: np.ndarray):
        x = preprocess(image, self.preprocess_spec)
        cells = x.reshape(OS_GRID, OS_CELL, OS_GRID, OS_CELL, 3)
        resp = np.einsum("aibjc,ijc->ab", cells, self.kernel)
        objectness = _sigmoid(self.obj_gain * resp + self.obj_bias)
        class_probs = _softmax(resp[:, :, None] * self.class_gains)
        return x, resp, objectness, class_probs

    def raw_scores(self, image: np.ndarray) -> RawScores:
        _, _, objectness, class_probs = self._forward(image)
        return RawScores(
            style=ONE_STAGE,
            boxes=self._boxes(*image.shape[:2]),
            objectness=objectness.reshape(-1),
            class_probs=class_probs.reshape(-1, N_CLASSES),
        )

    def scores_and_vjp(self, image: np.ndarray):
        h, w = image.shape[:2]
        _, resp, objectness, class_probs = self._forward(image)
        scores = RawScores(
            style=ONE_STAGE,
            boxes=self._boxes(h, w),
            objectness=objectness.reshape(-1),
            class_probs=class_probs.reshape(-1, N_CLASSES),
        )

        def vjp(d_objectness, d_class_probs):
            d_resp = np.zeros((OS_GRID, OS_GRID))
            if d_objectness is not None:
                d_obj = np.asarray(d_objectness).reshape(OS_GRID, OS_GRID)
                d_resp += d_obj * objectness * (1.0 - objectness) * self.obj_gain
            if d_class_probs is not None:
                d_p = np.asarray(d_class_probs).reshape(OS_GRID, OS_GRID, N_CLASSES)
                d_logits = _softmax_vjp(class_probs, d_p)
                d_resp += d_logits @ self.class_gains
            d_cells = np.einsum("ab,ijc->aibjc", d_resp, self.kernel)
            d_x = d_cells.reshape(OS_SIDE, OS_SIDE, 3)
            return preprocess_vjp(d_x, self.preprocess_spec, h, w)

        return scores, vjp


class ToyTwoStage(DetectorAdapter):
    """Dense proposal detector: 676 overlapping windows, softmax incl. background."""

    name = "toy_two_stage"
    style = TWO_STAGE

    def __init__(self, score_threshold: float = 0.5, nms_iou: float = 0.5):
        self.score_threshold = float(score_threshold)
        self.nms_iou = float(nms_iou)
        self.preprocess_spec = PreprocessSpec(
            TS_SIDE, TS_SIDE, mean=(0.5, 0.5, 0.5), scale=(0.5, 0.5, 0.5)
        )

        # pattern footprint at this scale, cropped centered into one proposal
        # window; built from the resize-only view so background sits at 0
        cell = TS_SIDE // OS_GRID
        raw = resize_bilinear(_reference_image(), TS_SIDE, TS_SIDE)
        patch = raw[3 * cell:4 * cell, 3 * cell:4 * cell].mean(axis=2)
        off = (cell - TS_WINDOW) // 2
        window = patch[off:off + TS_WINDOW, off:off + TS_WINDOW]
        unit = _matched_filter(window, TS_KERNEL_BLUR)
        self.kernel = _per_channel(unit)

        # calibrate against the best-responding window on the reference scene
        resp = self._responses(preprocess(_reference_image(), self.preprocess_spec))
        self.fg_gain = TS_FG_SPAN / float(resp.max())
        self.class_gains = np.asarray(
            [self.fg_gain, self.fg_gain * TS_FG1_RATIO, 0.0, 0.0]
        )
        self.class_biases = np.asarray(
            [TS_FG_BIAS, TS_FG_BIAS, TS_FG_BIAS, TS_BG_BIAS]
        )

    def _responses(self, x: np.ndarray) -> np.ndarray:
        windows = np.lib.stride_tricks.sliding_window_view(
            x, (TS_WINDOW, TS_WINDOW, 3)
        )[::TS_STRIDE, ::TS_STRIDE, 0]
        return np.einsum("abijc,ijc->ab", windows, self.kernel)

    def _boxes(self, h: int, w: int) -> np.ndarray:
        starts = np.arange(TS_GRID, dtype=np.float64) * TS_STRIDE
        boxes = np.empty((TS_GRID, TS_GRID, 4))
        boxes[:, :, 0] = (starts * h / TS_SIDE)[:, None]
        boxes[:, :, 1] = (starts * w / TS_SIDE)[None, :]
        boxes[:, :, 2] = ((starts + TS_WINDOW) * h / TS_SIDE)[:, None]
        boxes[:, :, 3] = ((starts + TS_WINDOW) * w / TS_SIDE)[None, :]
        return boxes.reshape(-1, 4)

    def _forward(self, image: np.ndarray):
        x = preprocess(image, self.preprocess_spec)
        resp = self._responses(x)
        logits = resp[:, :, None] * self.class_gains + self.class_biases
        class_probs = _softmax(logits)
        return x, resp, class_probs

    def raw_scores(self, image: np.ndarray) -> RawScores:
        _, _, class_probs = self._forward(image)
        return RawScores(
            style=TWO_STAGE,
            boxes=self._boxes(*image.shape[:2]),
            objectness=None,
            class_probs=class_probs.reshape(-1, N_CLASSES + 1),
        )

    def scores_and_vjp(self, image: np.ndarray):
        h, w = image.shape[:2]
        _, resp, class_probs = self._forward(image)
        scores = RawScores(
            style=TWO_STAGE,
            boxes=self._boxes(h, w),
            objectness=None,
            class_probs=class_probs.reshape(-1, N_CLASSES + 1),
        )

        def vjp(d_objectness, d_class_probs):
            if d_class_probs is None:
                return np.zeros((h, w, 3))
            d_p = np.asarray(d_class_probs).reshape(TS_GRID, TS_GRID, N_CLASSES + 1)
            d_logits = _softmax_vjp(class_probs, d_p)
            d_resp = d_logits @ self.class_gains
            d_x = np.zeros((TS_SIDE, TS_SIDE, 3))
            span = (TS_GRID - 1) * TS_STRIDE
            for di in range(TS_WINDOW):
                for dj in range(TS_WINDOW):
                    d_x[di:di + span + 1:TS_STRIDE, dj:dj + span + 1:TS_STRIDE] += (
                        d_resp[:, :, None] * self.kernel[di, dj]
                    )
            return preprocess_vjp(d_x, self.preprocess_spec, h, w)

        return scores, vjp


register_adapter("toy_one_stage", ToyOneStage)
register_adapter("toy_two_stage", ToyTwoStage)
