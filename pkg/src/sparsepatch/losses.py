"""Evasion losses over differentiable detector scores.

All losses map raw candidate scores to a scalar in [0, 1] that the attack
minimizes; driving them down pushes every candidate toward "background".
They operate on pre-NMS scores so suppressed candidates still receive
gradient. Max reductions route their subgradient to the first maximal
element in scan order, keeping optimization traces deterministic. Empty
candidate sets score 0: there is nothing left to suppress.

Each ``*_with_grad`` variant also returns cotangents (d_objectness,
d_class_probs) for the adapter's score-to-image pullback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import ONE_STAGE, TWO_STAGE, RawScores


@dataclass(frozen=True)
class LossWeights:
    """Weights for the two-stage loss terms; both must be non-negative."""

    alpha1: float = 1.0
    alpha2: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ValueError("loss weights must be non-negative")


PHASE1_WEIGHTS = LossWeights(alpha1=1.0, alpha2=0.0)
PHASE2_WEIGHTS = LossWeights(alpha1=0.0, alpha2=1.0)


def _check_style(scores: RawScores, style: str) -> None:
    if scores.style != style:
        raise ValueError(f"expected {style} scores, got {scores.style}")


def loss_yolo(scores: RawScores) -> float:
    """Maximum confidence over all candidates and classes (one-stage)."""
    return loss_yolo_with_grad(scores)[0]


def loss_yolo_with_grad(scores: RawScores):
    _check_style(scores, ONE_STAGE)
    conf = scores.objectness[:, None] * scores.class_probs
    if conf.size == 0:
        return 0.0, np.zeros_like(scores.objectness), np.zeros_like(scores.class_probs)
    b, c = np.unravel_index(np.argmax(conf), conf.shape)
    d_obj = np.zeros_like(scores.objectness)
    d_cls = np.zeros_like(scores.class_probs)
    d_obj[b] = scores.class_probs[b, c]
    d_cls[b, c] = scores.objectness[b]
    return float(conf[b, c]), d_obj, d_cls


def loss_frcnn_term1(scores: RawScores) -> float:
    """Maximum foreground probability over all proposals (two-stage)."""
    _check_style(scores, TWO_STAGE)
    fg = scores.foreground_probs()
    return float(fg.max()) if fg.size else 0.0


def loss_frcnn_term2(scores: RawScores) -> float:
    """Mean over proposals of the per-proposal max foreground probability."""
    _check_style(scores, TWO_STAGE)
    fg = scores.foreground_probs()
    return float(fg.max(axis=1).mean()) if fg.size else 0.0


def loss_frcnn(scores: RawScores, weights: LossWeights) -> float:
    """Weighted sum of the two two-stage terms."""
    return (
        weights.alpha1 * loss_frcnn_term1(scores)
        + weights.alpha2 * loss_frcnn_term2(scores)
    )


def loss_frcnn_with_grad(scores: RawScores, weights: LossWeights):
    _check_style(scores, TWO_STAGE)
    fg = scores.foreground_probs()
    d_cls = np.zeros_like(scores.class_probs)
    if fg.size == 0:
        return 0.0, None, d_cls
    value = 0.0
    if weights.alpha1 > 0:
        b, c = np.unravel_index(np.argmax(fg), fg.shape)
        value += weights.alpha1 * float(fg[b, c])
        d_cls[b, c] += weights.alpha1
    if weights.alpha2 > 0:
        n = fg.shape[0]
        per_box = fg.argmax(axis=1)
        value += weights.alpha2 * float(fg.max(axis=1).mean())
        d_cls[np.arange(n), per_box] += weights.alpha2 / n
    return value, None, d_cls


def detector_loss_with_grad(scores: RawScores, weights: LossWeights):
    """Dispatch on adapter style: Eq.-style max loss or weighted two-term loss."""
    if scores.style == ONE_STAGE:
        return loss_yolo_with_grad(scores)
    return loss_frcnn_with_grad(scores, weights)


def loss_ensemble(per_detector_losses) -> float:
    """Unweighted sum of per-detector losses; rejects an empty ensemble."""
    values = list(per_detector_losses)
    if not values:
        raise ValueError("ensemble requires at least one detector loss")
    return float(sum(values))
