"""Cruciform patch layouts, budget-compliant mask rendering, and component analysis.

A layout places one cross per detected object, arms crossing at the object's
bounding-box center: a long thin span erases detections with very few pixels.
The pixel budget defaults to 2% of the spatial pixel count; rendering never
exceeds it. Connected-component sizes of the realized perturbation feed the
evasion score.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

DEFAULT_BUDGET_FRACTION = 0.02

# thickness by object count: few objects afford thick crosses, many force
# thin, long ones
THICKNESS_BREAKS = ((2, 5), (5, 3))
THICKNESS_MANY = 1


@dataclass(frozen=True)
class CruciformSpec:
    """One cross: center pixel, arm half-length, odd bar thickness."""

    center: tuple[int, int]
    arm: int
    thickness: int

    def __post_init__(self) -> None:
        if self.thickness < 1 or self.thickness % 2 == 0:
            raise ValueError(f"thickness must be odd and >= 1, got {self.thickness}")
        if self.arm < 0:
            raise ValueError(f"arm half-length must be >= 0, got {self.arm}")


@dataclass
class PatchLayout:
    """A set of crosses on an image plus the pixel budget they must respect."""

    height: int
    width: int
    budget: int
    crosses: list[CruciformSpec] = field(default_factory=list)

    def __post_init__(self) -> None:
        for spec in self.crosses:
            r, c = spec.center
            if not (0 <= r < self.height and 0 <= c < self.width):
                raise ValueError(
                    f"cross center {spec.center} outside {self.height}x{self.width}"
                )


@dataclass
class ComponentReport:
    """Connected-domain sizes of a mask's foreground pixels."""

    connectivity: int
    sizes: list[int]
    total: int


def default_budget(height: int, width: int, fraction: float = DEFAULT_BUDGET_FRACTION) -> int:
    return int(np.floor(fraction * height * width))


def thickness_for_count(n_objects: int) -> int:
    for limit, thickness in THICKNESS_BREAKS:
        if n_objects <= limit:
            return thickness
    return THICKNESS_MANY


def cross_area(arm: int, thickness: int) -> int:
    """Unclipped pixel count of a cross: two bars minus their overlap."""
    w = 2 * arm + 1
    if w >= thickness:
        return 2 * thickness * w - thickness * thickness
    return 2 * thickness * w - w * w


def max_arm_for_budget(share: int, thickness: int, arm_cap: int) -> int:
    """Largest arm half-length whose unclipped cross area fits in `share`."""
    arm = 0
    while arm < arm_cap and cross_area(arm + 1, thickness) <= share:
        arm += 1
    return arm


def cross_mask(spec: CruciformSpec, height: int, width: int) -> np.ndarray:
    """Render one cross to a boolean (H, W) array, clipped to bounds."""
    r, c = spec.center
    h = (spec.thickness - 1) // 2
    a = spec.arm
    out = np.zeros((height, width), dtype=bool)
    # horizontal bar: thickness rows, full arm span of columns
    out[max(r - h, 0):min(r + h, height - 1) + 1,
        max(c - a, 0):min(c + a, width - 1) + 1] = True
    # vertical bar
    out[max(r - a, 0):min(r + a, height - 1) + 1,
        max(c - h, 0):min(c + h, width - 1) + 1] = True
    return out


def render_layout(layout: PatchLayout) -> np.ndarray:
    """Render a layout to a {0, 1} mask whose popcount never exceeds the budget.

    If the union of crosses overflows the budget, pixels are trimmed from arm
    tips (maximal Chebyshev distance from their own cross center) in
    round-robin order across crosses, which preserves the center region.
    """
    per_cross = [cross_mask(s, layout.height, layout.width) for s in layout.crosses]
    if not per_cross:
        return np.zeros((layout.height, layout.width), dtype=np.uint8)

    coverage = np.sum(per_cross, axis=0, dtype=np.int32)
    popcount = int(np.count_nonzero(coverage))
    if popcount <= layout.budget:
        return (coverage > 0).astype(np.uint8)

    # per-cross pixel queues, farthest-from-center first (ties: larger
    # row, then col, removed first) so trimming is deterministic
    queues = []
    for spec, m in zip(layout.crosses, per_cross):
        rr, cc = np.nonzero(m)
        r0, c0 = spec.center
        dist = np.maximum(np.abs(rr - r0), np.abs(cc - c0))
        order = np.lexsort((cc, rr, dist))
        queues.append([(int(r), int(c)) for r, c in zip(rr[order], cc[order])])

    k = 0
    while popcount > layout.budget:
        queue = queues[k % len(queues)]
        k += 1
        if not queue:
            continue
        r, c = queue.pop()
        coverage[r, c] -= 1
        if coverage[r, c] == 0:
            popcount -= 1
    return (coverage > 0).astype(np.uint8)


def layout_from_detections(
    detections,
    height: int,
    width: int,
    budget: int | None = None,
    thickness_policy=thickness_for_count,
) -> PatchLayout:
    """Build one cross per detection, centered on each box, within the budget.

    With no detections the layout is empty (the attack goal is already met).
    Arm lengths are maximized under a per-object equal share of the budget,
    so the rendered union always fits without trimming.
    """
    if budget is None:
        budget = default_budget(height, width)
    boxes = [d.box if hasattr(d, "box") else d for d in detections]
    if not boxes:
        return PatchLayout(height, width, budget, [])

    thickness = thickness_policy(len(boxes))
    share = budget // len(boxes)
    arm_cap = max(height, width)
    arm = max_arm_for_budget(share, thickness, arm_cap)
    crosses = []
    for box in boxes:
        r_min, c_min, r_max, c_max = box
        r = int(np.floor((r_min + r_max) / 2.0 + 0.5))
        c = int(np.floor((c_min + c_max) / 2.0 + 0.5))
        r = min(max(r, 0), height - 1)
        c = min(max(c, 0), width - 1)
        crosses.append(CruciformSpec(center=(r, c), arm=arm, thickness=thickness))
    return PatchLayout(height, width, budget, crosses)


_STRUCTURE_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_STRUCTURE_8 = np.ones((3, 3), dtype=bool)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> ComponentReport:
    """Partition a mask's 1-pixels into maximal connected regions.

    Sizes are reported in ascending order and sum to the mask popcount.
    """
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = np.asarray(mask) != 0
    structure = _STRUCTURE_4 if connectivity == 4 else _STRUCTURE_8
    labels, n = ndimage.label(mask, structure=structure)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:] if n else np.array([], dtype=int)
    sizes = sorted(int(s) for s in sizes)
    return ComponentReport(connectivity=connectivity, sizes=sizes, total=int(sum(sizes)))


def layout_to_dict(layout: PatchLayout) -> dict:
    return {
        "image_size": [layout.height, layout.width],
        "crosses": [
            {"center": [s.center[0], s.center[1]], "arm": s.arm, "thickness": s.thickness}
            for s in layout.crosses
        ],
        "budget": layout.budget,
    }


def layout_from_dict(doc: dict) -> PatchLayout:
    h, w = doc["image_size"]
    crosses = [
        CruciformSpec(center=(int(c["center"][0]), int(c["center"][1])),
                      arm=int(c["arm"]), thickness=int(c["thickness"]))
        for c in doc["crosses"]
    ]
    return PatchLayout(int(h), int(w), int(doc["budget"]), crosses)


def save_layout(path: str | Path, layout: PatchLayout) -> None:
    Path(path).write_text(json.dumps(layout_to_dict(layout), indent=2) + "\n")


def load_layout(path: str | Path) -> PatchLayout:
    return layout_from_dict(json.loads(Path(path).read_text()))
