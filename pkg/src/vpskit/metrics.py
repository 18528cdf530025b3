"""Panoptic quality (PQ) per frame and video panoptic quality (VPQ) over windows.

Segments match iff they share a class and their IoU strictly exceeds 0.5,
which makes every match unique. VPQ slides a k-frame window over the
sequence, joins segments into (class, instance) tubes whose IoU is the
ratio of summed per-frame intersections to summed per-frame unions, and
accumulates TP/FP/FN stats over every window start before averaging.

Conventions fixed here: pixels that are void in the ground truth are
removed from both maps before matching; thing-class pixels with instance 0
("unassigned things", e.g. missed detections) are ignore regions on both
sides - they are neither predictions nor targets; classes absent from both
maps are excluded from class averages.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import (
    ClassTaxonomy,
    LabelGrid,
    PanopticMap,
    Segment,
    _check_known_classes,
    extract_segments,
    iou,
)
from .errors import DimensionMismatch, SequenceLengthMismatch

DEFAULT_WINDOW_SIZES = (1, 2, 3, 4)

MATCH_IOU_THRESHOLD = 0.5  # strict: a pair matches only when IoU > this


class PqStats:
    """Per-class TP/FP/FN counters with the IoU sum over true positives."""

    def __init__(self):
        self._cells: dict[int, list] = defaultdict(lambda: [0, 0, 0, 0.0])

    def add_tp(self, class_id: int, iou_value: float) -> None:
        cell = self._cells[class_id]
        cell[0] += 1
        cell[3] += iou_value

    def add_fp(self, class_id: int) -> None:
        self._cells[class_id][1] += 1

    def add_fn(self, class_id: int) -> None:
        self._cells[class_id][2] += 1

    def merge(self, other: "PqStats") -> "PqStats":
        for class_id, (tp, fp, fn, iou_sum) in other._cells.items():
            cell = self._cells[class_id]
            cell[0] += tp
            cell[1] += fp
            cell[2] += fn
            cell[3] += iou_sum
        return self

    def classes(self) -> list[int]:
        return sorted(self._cells)

    def cell(self, class_id: int) -> tuple[int, int, int, float]:
        tp, fp, fn, iou_sum = self._cells.get(class_id, [0, 0, 0, 0.0])
        return tp, fp, fn, iou_sum


@dataclass(frozen=True)
class ClassMetrics:
    pq: float
    sq: float
    rq: float
    tp: int
    fp: int
    fn: int
    iou_sum: float


@dataclass(frozen=True)
class MetricReport:
    """Per-class and aggregate PQ scores, plus VPQ per window size when video."""

    per_class: Mapping[int, ClassMetrics]
    pq: float
    sq: float
    rq: float
    vpq_per_k: Mapping[int, float]
    vpq_mean: float | None = None

    def mean_pq_over(self, class_ids: Iterable[int]) -> float | None:
        """Mean PQ restricted to the given classes; None if none are scored."""
        values = [m.pq for c, m in self.per_class.items() if c in set(class_ids)]
        return sum(values) / len(values) if values else None

    def to_json_dict(self) -> dict:
        doc: dict = {
            "pq": {
                "per_class": {
                    str(c): {
                        "pq": _round6(m.pq),
                        "sq": _round6(m.sq),
                        "rq": _round6(m.rq),
                        "tp": m.tp,
                        "fp": m.fp,
                        "fn": m.fn,
                    }
                    for c, m in sorted(self.per_class.items())
                },
                "mean": _round6(self.pq),
                "sq": _round6(self.sq),
                "rq": _round6(self.rq),
            }
        }
        if self.vpq_per_k:
            vpq = {f"k={k}": _round6(v) for k, v in sorted(self.vpq_per_k.items())}
            vpq["mean"] = _round6(self.vpq_mean if self.vpq_mean is not None else 0.0)
            doc["vpq"] = vpq
        return doc


def _round6(value: float) -> float:
    return float(f"{value:.6f}")


def match_segments(
    pred: Sequence[Segment], gt: Sequence[Segment]
) -> tuple[list[tuple[Segment, Segment, float]], list[Segment], list[Segment]]:
    """Unique same-class matching with IoU strictly above 0.5.

    Returns (true-positive pairs with their IoU, unmatched predictions,
    unmatched ground truths). Uniqueness is a theorem of the > 0.5 rule and
    is still re-checked defensively.
    """
    matched_pred: set[int] = set()
    matched_gt: set[int] = set()
    tps = []
    for gi, g in enumerate(gt):
        for pi, p in enumerate(pred):
            if p.class_id != g.class_id:
                continue
            value = iou(p.pixels, g.pixels)
            if value > MATCH_IOU_THRESHOLD:
                if pi in matched_pred or gi in matched_gt:
                    raise RuntimeError(
                        "IoU > 0.5 produced a double match; matching rule violated"
                    )
                matched_pred.add(pi)
                matched_gt.add(gi)
                tps.append((p, g, value))
    fps = [p for pi, p in enumerate(pred) if pi not in matched_pred]
    fns = [g for gi, g in enumerate(gt) if gi not in matched_gt]
    return tps, fps, fns


def _scoreable(segments: Iterable[Segment], taxonomy: ClassTaxonomy) -> list[Segment]:
    # unassigned thing regions (instance 0) are ignore regions, not segments
    return [
        s
        for s in segments
        if not (s.instance_id == 0 and taxonomy.is_thing(s.class_id))
    ]


def _mask_gt_void(pred: PanopticMap, gt: PanopticMap, void: int) -> PanopticMap:
    gt_void = gt.classes.values == np.uint32(void)
    if not gt_void.any():
        return pred
    classes = np.where(gt_void, np.uint32(void), pred.classes.values)
    instances = np.where(gt_void, np.uint32(0), pred.instances.values)
    return PanopticMap(LabelGrid(classes), LabelGrid(instances))


def pq_stats(pred: PanopticMap, gt: PanopticMap, taxonomy: ClassTaxonomy) -> PqStats:
    """Single-frame PQ stats via explicit segment extraction and matching."""
    if pred.classes.values.shape != gt.classes.values.shape:
        raise DimensionMismatch(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    pred_f = _mask_gt_void(pred, gt, taxonomy.void_class_id)
    pred_segs = _scoreable(extract_segments(pred_f, taxonomy), taxonomy)
    gt_segs = _scoreable(extract_segments(gt, taxonomy), taxonomy)
    tps, fps, fns = match_segments(pred_segs, gt_segs)
    stats = PqStats()
    for _, g, value in tps:
        stats.add_tp(g.class_id, value)
    for p in fps:
        stats.add_fp(p.class_id)
    for g in fns:
        stats.add_fn(g.class_id)
    return stats


def report_from_stats(
    stats: PqStats,
    vpq_per_k: Mapping[int, float] | None = None,
    vpq_mean: float | None = None,
) -> MetricReport:
    per_class = {}
    for class_id in stats.classes():
        tp, fp, fn, iou_sum = stats.cell(class_id)
        if tp + fp + fn == 0:
            continue
        denom = tp + 0.5 * fp + 0.5 * fn
        sq = iou_sum / tp if tp else 0.0
        rq = tp / denom
        per_class[class_id] = ClassMetrics(
            pq=iou_sum / denom, sq=sq, rq=rq, tp=tp, fp=fp, fn=fn, iou_sum=iou_sum
        )
    n = len(per_class)
    return MetricReport(
        per_class=per_class,
        pq=sum(m.pq for m in per_class.values()) / n if n else 0.0,
        sq=sum(m.sq for m in per_class.values()) / n if n else 0.0,
        rq=sum(m.rq for m in per_class.values()) / n if n else 0.0,
        vpq_per_k=dict(vpq_per_k or {}),
        vpq_mean=vpq_mean,
    )


def pq(pred: PanopticMap, gt: PanopticMap, taxonomy: ClassTaxonomy) -> MetricReport:
    """Panoptic quality of one frame pair."""
    return report_from_stats(pq_stats(pred, gt, taxonomy))


class _FrameTable:
    """Per-frame segment areas and pred/gt intersection counts (no pixel sets)."""

    __slots__ = ("pred_area", "gt_area", "inter")

    def __init__(self, pred_area, gt_area, inter):
        self.pred_area = pred_area
        self.gt_area = gt_area
        self.inter = inter


def _valid_mask(
    pmap: PanopticMap, taxonomy: ClassTaxonomy, gt_void: np.ndarray
) -> np.ndarray:
    thing_ids = np.array(taxonomy.thing_class_ids(), dtype=np.uint32)
    unassigned = np.isin(pmap.classes.values, thing_ids) & (pmap.instances.values == 0)
    non_void = pmap.classes.values != np.uint32(taxonomy.void_class_id)
    return non_void & ~gt_void & ~unassigned


def _frame_table(
    pred: PanopticMap, gt: PanopticMap, taxonomy: ClassTaxonomy
) -> _FrameTable:
    if pred.classes.values.shape != gt.classes.values.shape:
        raise DimensionMismatch(
            f"pred {pred.width}x{pred.height} vs gt {gt.width}x{gt.height}"
        )
    _check_known_classes(pred.classes, taxonomy)
    _check_known_classes(gt.classes, taxonomy)

    gt_void = gt.classes.values == np.uint32(taxonomy.void_class_id)
    pred_valid = _valid_mask(pred, taxonomy, gt_void)
    gt_valid = _valid_mask(gt, taxonomy, gt_void)

    pred_keys = pred.classes.values.astype(np.uint64) << np.uint64(32)
    pred_keys |= pred.instances.values.astype(np.uint64)
    gt_keys = gt.classes.values.astype(np.uint64) << np.uint64(32)
    gt_keys |= gt.instances.values.astype(np.uint64)

    def unkey(key: int) -> tuple[int, int]:
        return key >> 32, key & 0xFFFFFFFF

    pk, pc = np.unique(pred_keys[pred_valid], return_counts=True)
    gk, gc = np.unique(gt_keys[gt_valid], return_counts=True)
    pred_area = {unkey(k): int(c) for k, c in zip(pk.tolist(), pc.tolist())}
    gt_area = {unkey(k): int(c) for k, c in zip(gk.tolist(), gc.tolist())}

    inter = {}
    both = pred_valid & gt_valid
    if both.any():
        joint = np.stack([pred_keys[both], gt_keys[both]], axis=1)
        pairs, counts = np.unique(joint, axis=0, return_counts=True)
        for (p_key, g_key), c in zip(pairs.tolist(), counts.tolist()):
            inter[(unkey(p_key), unkey(g_key))] = int(c)
    return _FrameTable(pred_area, gt_area, inter)


def _window_stats(tables: Sequence[_FrameTable], stats: PqStats) -> None:
    pred_total: dict[tuple[int, int], int] = defaultdict(int)
    gt_total: dict[tuple[int, int], int] = defaultdict(int)
    inter_total: dict[tuple, int] = defaultdict(int)
    for table in tables:
        for key, area in table.pred_area.items():
            pred_total[key] += area
        for key, area in table.gt_area.items():
            gt_total[key] += area
        for pair, count in table.inter.items():
            inter_total[pair] += count

    matched_pred: set = set()
    matched_gt: set = set()
    for (p_key, g_key), inter in inter_total.items():
        if p_key[0] != g_key[0]:
            continue
        union = pred_total[p_key] + gt_total[g_key] - inter
        value = inter / union
        if value > MATCH_IOU_THRESHOLD:
            if p_key in matched_pred or g_key in matched_gt:
                raise RuntimeError(
                    "IoU > 0.5 produced a double tube match; matching rule violated"
                )
            matched_pred.add(p_key)
            matched_gt.add(g_key)
            stats.add_tp(p_key[0], value)
    for p_key in pred_total:
        if p_key not in matched_pred:
            stats.add_fp(p_key[0])
    for g_key in gt_total:
        if g_key not in matched_gt:
            stats.add_fn(g_key[0])


def vpq(
    pred_seq: Sequence[PanopticMap],
    gt_seq: Sequence[PanopticMap],
    taxonomy: ClassTaxonomy,
    window_sizes: Sequence[int] = DEFAULT_WINDOW_SIZES,
) -> MetricReport:
    """Video panoptic quality over k-frame tube windows.

    VPQ^k accumulates tube stats over every window start position; the
    headline VPQ is the mean over the requested window sizes. Window sizes
    exceeding the sequence length are skipped. The report's per-class PQ
    section accumulates single-frame stats over all frames (the k=1
    definition) via the independent segment-matching path.
    """
    if len(pred_seq) != len(gt_seq):
        raise SequenceLengthMismatch(
            f"{len(pred_seq)} predicted frames vs {len(gt_seq)} ground-truth frames"
        )
    if not pred_seq:
        raise ValueError("empty sequences cannot be evaluated")
    sizes = sorted(set(int(k) for k in window_sizes))
    if not sizes or sizes[0] < 1:
        raise ValueError(f"window sizes must be >= 1, got {list(window_sizes)}")

    tables = [
        _frame_table(pred, gt, taxonomy) for pred, gt in zip(pred_seq, gt_seq)
    ]

    vpq_per_k: dict[int, float] = {}
    for k in sizes:
        if k > len(tables):
            continue
        stats = PqStats()
        for start in range(len(tables) - k + 1):
            _window_stats(tables[start : start + k], stats)
        vpq_per_k[k] = report_from_stats(stats).pq

    frame_stats = PqStats()
    for pred, gt in zip(pred_seq, gt_seq):
        frame_stats.merge(pq_stats(pred, gt, taxonomy))
    mean = sum(vpq_per_k.values()) / len(vpq_per_k) if vpq_per_k else None
    return report_from_stats(frame_stats, vpq_per_k=vpq_per_k, vpq_mean=mean)
