"""Evasion scoring: per-image metric in [0, 2] and corpus aggregation.

A perturbed image earns ``(2 - sum(R_k)/D) * (1 - min(B, B') / B)`` where
R_k are connected-domain sizes of the realized perturbation, D is the pixel
budget denominator (2% of the spatial pixels), B counts clean detections and
B' adversarial ones. Fewer changed pixels and more erased boxes score higher;
an image the detector already saw nothing in scores 0 and is flagged.

Components are measured on the realized difference between adversarial and
clean pixels, not the designed mask, so unused mask pixels cost nothing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .masks import DEFAULT_BUDGET_FRACTION, connected_components
from .optimizer import AttackResult


@dataclass(frozen=True)
class EvasionScoreInput:
    """Everything the per-image score needs, for one detector."""

    clean_boxes: int
    adv_boxes: int
    component_sizes: tuple[int, ...]
    denominator: int

    def __post_init__(self) -> None:
        if self.clean_boxes < 0 or self.adv_boxes < 0:
            raise ValueError("box counts must be >= 0")
        if self.denominator < 1:
            raise ValueError("denominator must be >= 1")
        if sum(self.component_sizes) > self.denominator:
            raise ValueError("perturbed pixels exceed the budget denominator")

    @property
    def no_object(self) -> bool:
        return self.clean_boxes == 0


def evasion_score(inp: EvasionScoreInput) -> float:
    """Per-image, per-detector evasion score in [0, 2].

    Images with zero clean detections score 0 (the ratio is undefined there);
    callers should surface ``inp.no_object`` instead of hiding them.
    """
    if inp.clean_boxes == 0:
        return 0.0
    pixel_term = 2.0 - sum(inp.component_sizes) / inp.denominator
    box_term = 1.0 - min(inp.clean_boxes, inp.adv_boxes) / inp.clean_boxes
    return pixel_term * box_term


def realized_diff_mask(clean: np.ndarray, adversarial: np.ndarray) -> np.ndarray:
    """{0, 1} mask of pixels where any channel differs."""
    return np.any(clean != adversarial, axis=2).astype(np.uint8)


@dataclass
class ImageScoreRow:
    image_id: str
    no_object: bool
    perturbed_pixels: int
    n_components: int
    scores: dict[str, float]
    boxes_before: dict[str, int]
    boxes_after: dict[str, int]


@dataclass
class CorpusReport:
    """Per-detector score totals plus the per-image table."""

    totals: dict[str, float]
    rows: list[ImageScoreRow]
    skipped: list[str]

    def write_csv(self, path: str | Path) -> None:
        detectors = list(self.totals)
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["image_id", "no_object", "perturbed_pixels", "n_components"]
            for d in detectors:
                header += [f"score[{d}]", f"boxes_before[{d}]", f"boxes_after[{d}]"]
            writer.writerow(header)
            for row in self.rows:
                line = [
                    row.image_id,
                    int(row.no_object),
                    row.perturbed_pixels,
                    row.n_components,
                ]
                for d in detectors:
                    line += [
                        f"{row.scores[d]:.6f}",
                        row.boxes_before[d],
                        row.boxes_after[d],
                    ]
                writer.writerow(line)

    def write_json(self, path: str | Path) -> None:
        doc = {
            "totals": self.totals,
            "images": len(self.rows),
            "skipped": self.skipped,
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def score_corpus(
    results: list[AttackResult],
    clean_images: dict[str, np.ndarray],
    budget_fraction: float = DEFAULT_BUDGET_FRACTION,
    connectivity: int = 8,
) -> CorpusReport:
    """Score every attack result against its clean image.

    Results whose ``image_id`` has no clean image are skipped and reported,
    never silently dropped. Totals are plain sums over images, so a corpus
    capped at N images can reach at most 2N per detector.
    """
    totals: dict[str, float] = {}
    rows: list[ImageScoreRow] = []
    skipped: list[str] = []
    for result in results:
        image_id = result.image_id if result.image_id is not None else ""
        clean = clean_images.get(image_id)
        if clean is None:
            skipped.append(image_id)
            continue
        diff = realized_diff_mask(clean, result.adversarial_image)
        report = connected_components(diff, connectivity)
        h, w = diff.shape
        denominator = max(1, int(np.floor(budget_fraction * h * w)))
        scores = {}
        no_object = False
        for name in result.boxes_before:
            inp = EvasionScoreInput(
                clean_boxes=result.boxes_before[name],
                adv_boxes=result.boxes_after[name],
                component_sizes=tuple(report.sizes),
                denominator=denominator,
            )
            scores[name] = evasion_score(inp)
            no_object = no_object or inp.no_object
            totals[name] = totals.get(name, 0.0) + scores[name]
        rows.append(
            ImageScoreRow(
                image_id=image_id,
                no_object=no_object,
                perturbed_pixels=report.total,
                n_components=len(report.sizes),
                scores=scores,
                boxes_before=dict(result.boxes_before),
                boxes_after=dict(result.boxes_after),
            )
        )
    return CorpusReport(totals=totals, rows=rows, skipped=skipped)
