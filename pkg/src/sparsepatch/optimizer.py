"""Sparse-patch optimization: masked sign-gradient descent on the 1/255 lattice.

The patch starts as a copy of the clean pixels under the mask (zero initial
perturbation) and is updated with ``patch -= step * sign(grad)`` on the mask
support only, then clamped to [0, 1] and snapped to the 1/255 lattice. Step
sizes are integer multiples of 1/255 and shrink over schedule tiers, so every
intermediate image survives 8-bit encoding bit-exactly.

Ensembles with a two-stage detector run two phases: first suppress the single
highest-probability proposal, and if detections survive the phase-1 budget,
restart the step schedule (keeping the patch) and suppress the per-proposal
mean instead. The attack stops as soon as every detector reports zero
post-NMS detections.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .detectors import TWO_STAGE, DetectorAdapter
from .imaging import apply_patch, as_image, is_quantized, quantize_patch
from .losses import PHASE1_WEIGHTS, PHASE2_WEIGHTS, LossWeights, detector_loss_with_grad
from .masks import PatchLayout, render_layout

_LATTICE_TOL = 1e-9


def _lattice_multiple(step: float) -> int | None:
    k = round(step * 255.0)
    if k >= 1 and abs(step * 255.0 - k) <= _LATTICE_TOL:
        return int(k)
    return None


@dataclass(frozen=True)
class StepSchedule:
    """Ordered (step_size, max_iters) tiers; steps strictly decrease and
    every step is a positive integer multiple of 1/255."""

    tiers: tuple[tuple[float, int], ...]

    def __post_init__(self) -> None:
        if not self.tiers:
            raise ValueError("schedule needs at least one tier")
        prev = None
        for step, iters in self.tiers:
            if _lattice_multiple(step) is None:
                raise ValueError(f"step {step} is not a positive multiple of 1/255")
            if iters < 1:
                raise ValueError(f"tier iteration count must be >= 1, got {iters}")
            if prev is not None and step >= prev:
                raise ValueError("step sizes must strictly decrease across tiers")
            prev = step

    @property
    def total_iters(self) -> int:
        return sum(iters for _, iters in self.tiers)


DEFAULT_SCHEDULE = StepSchedule(
    ((16 / 255, 100), (4 / 255, 150), (1 / 255, 250))
)


@dataclass(frozen=True)
class PhaseConfig:
    """Two-phase weights for two-stage detectors plus the phase-1 budget."""

    phase1_iters: int = 150
    phase1: LossWeights = PHASE1_WEIGHTS
    phase2: LossWeights = PHASE2_WEIGHTS

    def __post_init__(self) -> None:
        if self.phase1_iters < 1:
            raise ValueError("phase1_iters must be >= 1")
        if not (self.phase1.alpha1 > 0 and self.phase1.alpha2 == 0):
            raise ValueError("phase 1 must weight only the max term")
        if not (self.phase2.alpha1 == 0 and self.phase2.alpha2 > 0):
            raise ValueError("phase 2 must weight only the mean term")


@dataclass(frozen=True)
class TraceRecord:
    """One optimization step: wall iteration, active phase/tier, loss values."""

    iteration: int
    phase: int
    tier: int
    step: float
    loss: float
    detector_losses: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "phase": self.phase,
            "tier": self.tier,
            "step": self.step,
            "loss": self.loss,
            "detector_losses": self.detector_losses,
        }


@dataclass
class AttackResult:
    """Attack outcome: adversarial image, realized mask, and bookkeeping."""

    adversarial_image: np.ndarray
    mask: np.ndarray
    trace: list[TraceRecord]
    boxes_before: dict[str, int]
    boxes_after: dict[str, int]
    success: dict[str, bool]
    wall_iterations: int
    phase_terminated: int
    image_id: str | None = None

    @property
    def success_overall(self) -> bool:
        return all(self.success.values())

    def phase_trace(self, phase: int) -> list[TraceRecord]:
        return [r for r in self.trace if r.phase == phase]


def unique_names(adapters) -> list[str]:
    names = []
    for adapter in adapters:
        name = adapter.name
        k = 2
        while name in names:
            name = f"{adapter.name}_{k}"
            k += 1
        names.append(name)
    return names


def success_check(adapters, image: np.ndarray) -> dict[str, bool]:
    """Per-detector flag: True iff the detector sees zero detections."""
    return {
        name: len(adapter.detect(image)) == 0
        for name, adapter in zip(unique_names(adapters), adapters)
    }


def write_trace(path: str | Path, trace: list[TraceRecord]) -> None:
    """Persist a loss trace as JSON lines, one record per iteration."""
    with Path(path).open("w") as fh:
        for record in trace:
            fh.write(json.dumps(record.to_dict()) + "\n")


def run_attack(
    image: np.ndarray,
    adapters: list[DetectorAdapter],
    layout: PatchLayout,
    schedule: StepSchedule = DEFAULT_SCHEDULE,
    phases: PhaseConfig | None = None,
    image_id: str | None = None,
) -> AttackResult:
    """Optimize a sparse patch until every detector reports nothing.

    The input image must already sit on the 1/255 lattice (anything decoded
    from 8-bit PNG does). Exhausting the schedule without success is a normal
    outcome with ``success`` flags False, not an error.
    """
    image = as_image(image)
    if not is_quantized(image, tol=_LATTICE_TOL):
        raise ValueError("input image must be quantized to 1/255 multiples")
    if not adapters:
        raise ValueError("attack requires at least one detector adapter")
    phases = phases or PhaseConfig()

    mask = render_layout(layout)
    support = (mask != 0)[:, :, None]
    names = unique_names(adapters)

    patch = image.copy()
    adv = image
    trace: list[TraceRecord] = []
    wall = 0
    phase_terminated = 0

    # one forward per adapter per iteration: the same scores feed the clean
    # box count, the loss gradient, and the post-update success check
    forward = [adapter.scores_and_vjp(adv) for adapter in adapters]
    boxes_before = {
        name: len(adapter.detections_from_scores(scores))
        for name, adapter, (scores, _) in zip(names, adapters, forward)
    }

    def empty_everywhere() -> bool:
        return not any(
            adapter.any_detection(scores)
            for adapter, (scores, _) in zip(adapters, forward)
        )

    two_stage = any(a.style == TWO_STAGE for a in adapters)
    if two_stage:
        plan = [(1, phases.phase1, phases.phase1_iters), (2, phases.phase2, None)]
    else:
        plan = [(1, phases.phase1, None)]

    done = empty_everywhere()
    for phase_no, weights, iter_cap in plan:
        if done:
            break
        budget_left = iter_cap
        for tier_idx, (step, max_iters) in enumerate(schedule.tiers):
            if done or (budget_left is not None and budget_left <= 0):
                break
            for _ in range(max_iters):
                if budget_left is not None and budget_left <= 0:
                    break
                total = 0.0
                grad = np.zeros_like(image)
                detector_losses = {}
                for name, (scores, vjp) in zip(names, forward):
                    value, d_obj, d_cls = detector_loss_with_grad(scores, weights)
                    detector_losses[name] = value
                    total += value
                    grad += vjp(d_obj, d_cls)
                trace.append(
                    TraceRecord(wall, phase_no, tier_idx, step, total, detector_losses)
                )

                patch = patch - step * np.sign(np.where(support, grad, 0.0))
                np.clip(patch, 0.0, 1.0, out=patch)
                patch = quantize_patch(patch)

                wall += 1
                if budget_left is not None:
                    budget_left -= 1
                adv = apply_patch(image, patch, mask)
                forward = [adapter.scores_and_vjp(adv) for adapter in adapters]
                if empty_everywhere():
                    phase_terminated = phase_no
                    done = True
                    break
        if not done:
            phase_terminated = phase_no

    success = {
        name: not adapter.any_detection(scores)
        for name, adapter, (scores, _) in zip(names, adapters, forward)
    }
    boxes_after = {
        name: len(adapter.detections_from_scores(scores))
        for name, adapter, (scores, _) in zip(names, adapters, forward)
    }
    return AttackResult(
        adversarial_image=adv,
        mask=mask,
        trace=trace,
        boxes_before=boxes_before,
        boxes_after=boxes_after,
        success=success,
        wall_iterations=wall,
        phase_terminated=phase_terminated,
        image_id=image_id,
    )
