"""Detector adapter contract, greedy NMS, and the adapter registry.

An adapter wraps one detector behind a uniform surface: differentiable raw
candidate scores for the attack losses, and thresholded post-NMS detections
for success checks and box counting. Adapters are immutable after
construction and safe to share across concurrent attacks.

One-stage adapters expose per-candidate objectness plus class probabilities;
a candidate's confidence for class c is ``objectness * class_prob[c]``.
Two-stage adapters expose per-proposal probabilities over the foreground
classes plus a background class stored in the LAST column; detection scores
consider foreground columns only.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .imaging import PreprocessSpec

ONE_STAGE = "one_stage"
TWO_STAGE = "two_stage"


class DetectorError(RuntimeError):
    """Adapter failure (missing backend, bad construction), distinct from shape errors."""


@dataclass(frozen=True)
class Detection:
    """One post-NMS detection: pixel box (row_min, col_min, row_max, col_max)."""

    box: tuple[float, float, float, float]
    category: int
    score: float

    def __post_init__(self) -> None:
        r0, c0, r1, c1 = self.box
        if not (r0 < r1 and c0 < c1):
            raise ValueError(f"degenerate box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")


@dataclass
class RawScores:
    """Differentiable pre-NMS candidate scores.

    boxes: (N, 4) candidate boxes in input-image pixels.
    objectness: (N,) in [0, 1] for one-stage adapters, else None.
    class_probs: (N, C) for one-stage; (N, C+1) for two-stage with the
        background class in the last column, rows summing to 1.
    """

    style: str
    boxes: np.ndarray
    objectness: np.ndarray | None
    class_probs: np.ndarray

    @property
    def n_candidates(self) -> int:
        return int(self.boxes.shape[0])

    def foreground_probs(self) -> np.ndarray:
        """Class probabilities with any background column dropped."""
        if self.style == TWO_STAGE:
            return self.class_probs[:, :-1]
        return self.class_probs

    def confidences(self) -> np.ndarray:
        """(N, C) per-class detection confidences used for thresholding."""
        fg = self.foreground_probs()
        if self.style == ONE_STAGE:
            return self.objectness[:, None] * fg
        return fg


def iou(box_a, box_b) -> float:
    """Intersection-over-union of two (row_min, col_min, row_max, col_max) boxes."""
    r0 = max(box_a[0], box_b[0])
    c0 = max(box_a[1], box_b[1])
    r1 = min(box_a[2], box_b[2])
    c1 = min(box_a[3], box_b[3])
    inter = max(0.0, r1 - r0) * max(0.0, c1 - c0)
    if inter == 0.0:
        return 0.0
    area_a = (box_a[2] - box_a[0]) * (box_a[3] - box_a[1])
    area_b = (box_b[2] - box_b[0]) * (box_b[3] - box_b[1])
    return inter / (area_a + area_b - inter)


def nms(detections: list[Detection], iou_threshold: float = 0.5) -> list[Detection]:
    """Greedy non-maximum suppression.

    Keep the highest-scoring box (ties broken by lower index), drop every
    remaining box whose IoU with a kept box exceeds the threshold, repeat.
    """
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept: list[Detection] = []
    for i in order:
        cand = detections[i]
        if all(iou(cand.box, k.box) <= iou_threshold for k in kept):
            kept.append(cand)
    return kept


class DetectorAdapter(abc.ABC):
    """Behavioral contract every detector plugs in behind.

    ``detect`` is always consistent with ``raw_scores``:
    detect(x) == nms(filter(raw_scores(x), score >= score_threshold)).
    """

    name: str = "adapter"
    style: str = ONE_STAGE
    preprocess_spec: PreprocessSpec
    score_threshold: float = 0.5
    nms_iou: float = 0.5

    @abc.abstractmethod
    def raw_scores(self, image: np.ndarray) -> RawScores:
        """Differentiable candidate scores for an (H, W, 3) [0, 1] image."""

    @abc.abstractmethod
    def scores_and_vjp(self, image: np.ndarray):
        """Return (RawScores, vjp) where vjp(d_objectness, d_class_probs)
        pulls a gradient at the scores back to an (H, W, 3) image gradient.

        Either cotangent may be None when the loss does not touch it.
        """

    def detections_from_scores(self, scores: RawScores) -> list[Detection]:
        """Threshold + NMS applied to already-computed raw scores."""
        conf = scores.confidences()
        if conf.size == 0:
            return []
        best = conf.max(axis=1)
        cats = conf.argmax(axis=1)
        keep = np.nonzero(best >= self.score_threshold)[0]
        cands = [
            Detection(
                box=tuple(float(v) for v in scores.boxes[i]),
                category=int(cats[i]),
                score=float(best[i]),
            )
            for i in keep
        ]
        return nms(cands, self.nms_iou)

    def any_detection(self, scores: RawScores) -> bool:
        """True iff thresholding leaves at least one candidate.

        Equivalent to ``bool(detections_from_scores(scores))``: greedy NMS
        always keeps at least one box of a non-empty candidate set.
        """
        conf = scores.confidences()
        return bool(conf.size) and float(conf.max()) >= self.score_threshold

    def detect(self, image: np.ndarray) -> list[Detection]:
        """Thresholded, NMS-filtered detections; deterministic for fixed input."""
        return self.detections_from_scores(self.raw_scores(image))


_REGISTRY: dict[str, type] = {}


def register_adapter(name: str, factory) -> None:
    """Register an adapter factory under a config-addressable name."""
    _REGISTRY[name] = factory


def available_adapters() -> list[str]:
    return sorted(_REGISTRY)


def create_adapter(name: str, **options) -> DetectorAdapter:
    """Instantiate a registered adapter; unknown names raise DetectorError."""
    if name not in _REGISTRY:
        raise DetectorError(
            f"unknown detector {name!r}; available: {', '.join(available_adapters())}"
        )
    try:
        return _REGISTRY[name](**options)
    except DetectorError:
        raise
    except Exception as exc:  # constructor bugs surface as adapter failures
        raise DetectorError(f"failed to construct detector {name!r}: {exc}") from exc
