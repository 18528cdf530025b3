"""Shared test oracles: random valid panoptic maps and brute-force matching."""

import numpy as np

from vpskit.core import ClassEntry, ClassTaxonomy, LabelGrid, PanopticMap, Segment, iou
from vpskit.rng import Xoshiro256StarStar


def small_taxonomy() -> ClassTaxonomy:
    return ClassTaxonomy(
        entries=(
            ClassEntry(0, "void", "stuff"),
            ClassEntry(1, "road", "stuff"),
            ClassEntry(2, "sky", "stuff"),
            ClassEntry(10, "person", "thing"),
            ClassEntry(11, "rider", "thing"),
        )
    )


def random_panoptic_map(rng: Xoshiro256StarStar, width: int, height: int) -> PanopticMap:
    """A valid map with at most 6 segments: stuff background plus painted rectangles."""
    classes = np.full((height, width), (1, 2)[rng.next_below(2)], dtype=np.int64)
    instances = np.zeros((height, width), dtype=np.int64)
    for k in range(rng.next_below(5)):
        x0 = rng.next_below(width)
        y0 = rng.next_below(height)
        w = rng.next_int(1, max(1, width - x0))
        h = rng.next_int(1, max(1, height - y0))
        if rng.next_below(3) == 0:  # stuff patch
            classes[y0 : y0 + h, x0 : x0 + w] = (0, 1, 2)[rng.next_below(3)]
            instances[y0 : y0 + h, x0 : x0 + w] = 0
        else:  # thing instance
            classes[y0 : y0 + h, x0 : x0 + w] = (10, 11)[rng.next_below(2)]
            instances[y0 : y0 + h, x0 : x0 + w] = k + 1
    return PanopticMap(LabelGrid(classes), LabelGrid(instances))


def brute_force_ownership(boxes, width, height) -> np.ndarray:
    """Per-pixel box ownership oracle: smallest area wins, ties to lower track id."""
    grid = np.zeros((height, width), dtype=np.int64)
    for y in range(height):
        for x in range(width):
            cx, cy = x + 0.5, y + 0.5
            hits = [b for b in boxes if b.x0 <= cx < b.x1 and b.y0 <= cy < b.y1]
            if hits:
                winner = min(hits, key=lambda b: (b.area, b.track_id))
                grid[y, x] = winner.track_id
    return grid


def brute_force_match(pred, gt):
    """Enumerate ALL same-class pairs and apply the strict > 0.5 rule directly."""
    tps = []
    for p in pred:
        for g in gt:
            if p.class_id == g.class_id:
                value = iou(p.pixels, g.pixels)
                if value > 0.5:
                    tps.append(((p.class_id, p.instance_id), (g.class_id, g.instance_id), value))
    return sorted(tps)


def match_keys(tps: list[tuple[Segment, Segment, float]]):
    return sorted(
        ((p.class_id, p.instance_id), (g.class_id, g.instance_id), value)
        for p, g, value in tps
    )
