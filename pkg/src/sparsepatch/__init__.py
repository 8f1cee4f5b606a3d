"""sparsepatch: l0-bounded sparse adversarial patches that blind object detectors.

The pipeline composes a bright image with a patch under a cruciform binary
mask, optimizes the patch with quantized sign-gradient steps against an
ensemble of detectors, and scores how thoroughly detections vanish relative
to how few pixels changed.
"""

from .detectors import (
    Detection,
    DetectorAdapter,
    DetectorError,
    RawScores,
    available_adapters,
    create_adapter,
    nms,
    register_adapter,
)
from .imaging import (
    PreprocessSpec,
    apply_patch,
    is_quantized,
    load_image,
    load_mask,
    preprocess,
    preprocess_vjp,
    quantize_patch,
    resize_bilinear,
    save_image,
    save_mask,
)
from .losses import (
    LossWeights,
    loss_ensemble,
    loss_frcnn,
    loss_frcnn_term1,
    loss_frcnn_term2,
    loss_yolo,
)
from .masks import (
    ComponentReport,
    CruciformSpec,
    PatchLayout,
    connected_components,
    default_budget,
    layout_from_detections,
    render_layout,
)
from .optimizer import AttackResult, PhaseConfig, StepSchedule, run_attack, success_check
from .scoring import EvasionScoreInput, evasion_score, score_corpus
from .toydet import ToyOneStage, ToyTwoStage

__version__ = "0.1.0"

__all__ = [
    "AttackResult",
    "ComponentReport",
    "CruciformSpec",
    "Detection",
    "DetectorAdapter",
    "DetectorError",
    "EvasionScoreInput",
    "LossWeights",
    "PatchLayout",
    "PhaseConfig",
    "PreprocessSpec",
    "RawScores",
    "StepSchedule",
    "ToyOneStage",
    "ToyTwoStage",
    "apply_patch",
    "available_adapters",
    "connected_components",
    "create_adapter",
    "default_budget",
    "evasion_score",
    "is_quantized",
    "layout_from_detections",
    "load_image",
    "load_mask",
    "loss_ensemble",
    "loss_frcnn",
    "loss_frcnn_term1",
    "loss_frcnn_term2",
    "loss_yolo",
    "nms",
    "preprocess",
    "preprocess_vjp",
    "quantize_patch",
    "register_adapter",
    "render_layout",
    "resize_bilinear",
    "run_attack",
    "save_image",
    "save_mask",
    "score_corpus",
    "success_check",
]
