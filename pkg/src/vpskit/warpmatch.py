"""Warp & Match: make per-frame panoptic outputs time-consistent.

For each frame t >= 1 the instance masks are warped backward onto the
t-1 grid with the optical flow between the frames, IoU-compared against
the previous *output* frame, greedily matched, and relabeled so matched
masks inherit the earlier id while unmatched masks receive fresh ids.
Frame 0 passes through unchanged, and the class channel is never touched.
Ids that vanish for a frame are forgotten; there is no re-identification
across gaps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import ClassTaxonomy, FlowField, LabelGrid, PanopticMap
from .errors import DimensionMismatch, IncompleteAssignment, SequenceLengthMismatch

DEFAULT_IOU_THRESHOLD = 0.3


@dataclass(frozen=True)
class IoUMatrix:
    """IoUs between warped current masks (rows) and previous masks (columns)."""

    current_ids: tuple[int, ...]
    previous_ids: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (len(self.current_ids), len(self.previous_ids)):
            raise ValueError(
                f"matrix shape {arr.shape} does not match id lists "
                f"({len(self.current_ids)} x {len(self.previous_ids)})"
            )
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("IoU entries must lie in [0, 1]")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "current_ids", tuple(self.current_ids))
        object.__setattr__(self, "previous_ids", tuple(self.previous_ids))


@dataclass(frozen=True)
class IdAssignment:
    """Partition of current ids into matched (-> previous id) and fresh."""

    matches: dict[int, int]
    fresh: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "matches", dict(self.matches))
        object.__setattr__(self, "fresh", frozenset(self.fresh))
        if set(self.matches) & self.fresh:
            raise ValueError("an id cannot be both matched and fresh")
        targets = list(self.matches.values())
        if len(set(targets)) != len(targets):
            raise ValueError("matches must be one-to-one")

    def covers(self) -> frozenset[int]:
        return frozenset(self.matches) | self.fresh


@dataclass(frozen=True)
class TrackerState:
    """Carries the id counter and the previous output frame across time."""

    next_fresh_id: int
    prev_map: PanopticMap | None = None


def warp_backward(
    inst_t: LabelGrid,
    class_t: LabelGrid,
    flow_prev_to_curr: FlowField,
    void_class_id: int = 0,
) -> tuple[LabelGrid, LabelGrid]:
    """Warp frame-t label grids onto the t-1 grid by backward sampling.

    Each target pixel p samples the frame-t grids at round(p + flow(p))
    with nearest-neighbor rounding (floor(s + 0.5) per axis); positions
    falling outside the grid yield instance 0 and the void class.
    """
    if inst_t.values.shape != class_t.values.shape:
        raise DimensionMismatch("instance and class grids differ in size")
    h, w = inst_t.values.shape
    if flow_prev_to_curr.vectors.shape[:2] != (h, w):
        raise DimensionMismatch(
            f"flow is {flow_prev_to_curr.width}x{flow_prev_to_curr.height}, "
            f"grids are {w}x{h}"
        )
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.floor(xs + flow_prev_to_curr.vectors[..., 0] + 0.5).astype(np.int64)
    sy = np.floor(ys + flow_prev_to_curr.vectors[..., 1] + 0.5).astype(np.int64)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    cx = np.clip(sx, 0, w - 1)
    cy = np.clip(sy, 0, h - 1)
    warped_inst = np.where(inside, inst_t.values[cy, cx], np.uint32(0))
    warped_class = np.where(inside, class_t.values[cy, cx], np.uint32(void_class_id))
    return LabelGrid(warped_inst), LabelGrid(warped_class)


def invert_flow(flow: FlowField) -> FlowField:
    """Approximate the reverse flow by forward splatting.

    Each source pixel p with nonzero flow votes -flow(p) at target
    round(p + flow(p)); zero-flow pixels cast no vote, so moving content
    overrides the static background it lands on. Colliding votes keep the
    smaller displacement magnitude (earliest row-major source on ties) and
    unvoted targets stay zero.
    """
    h, w = flow.vectors.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    dx = flow.vectors[..., 0]
    dy = flow.vectors[..., 1]
    tx = np.floor(xs + dx + 0.5).astype(np.int64).ravel()
    ty = np.floor(ys + dy + 0.5).astype(np.int64).ravel()
    moving = ((dx != 0) | (dy != 0)).ravel()
    voting = moving & (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    mag = (dx * dx + dy * dy).ravel()
    idx = np.arange(h * w)
    # write votes in descending (magnitude, source index) order so the
    # smallest-magnitude, earliest vote lands last and wins
    order = np.lexsort((idx[voting], mag[voting]))[::-1]
    src = idx[voting][order]
    out = np.zeros((h, w, 2), dtype=np.float32)
    out[ty[voting][order], tx[voting][order], 0] = -dx.ravel()[src]
    out[ty[voting][order], tx[voting][order], 1] = -dy.ravel()[src]
    return FlowField(out)


def _thing_mask(
    class_values: np.ndarray, inst_values: np.ndarray, taxonomy: ClassTaxonomy
) -> np.ndarray:
    thing_ids = np.array(taxonomy.thing_class_ids(), dtype=np.uint32)
    return (inst_values != 0) & np.isin(class_values, thing_ids)


def _dominant_class(
    inst_values: np.ndarray, class_values: np.ndarray, mask: np.ndarray
) -> dict[int, int]:
    """Per instance id, the most frequent class on its masked pixels (ties: lower id)."""
    key = inst_values[mask].astype(np.uint64) << np.uint64(32) | class_values[mask].astype(
        np.uint64
    )
    pairs, counts = np.unique(key, return_counts=True)
    best: dict[int, tuple[int, int]] = {}
    for pair, count in zip(pairs.tolist(), counts.tolist()):
        inst = pair >> 32
        cls = pair & 0xFFFFFFFF
        cur = best.get(inst)
        if cur is None or (-count, cls) < cur:
            best[inst] = (-count, cls)
    return {inst: cls for inst, (_, cls) in best.items()}


def build_iou_matrix(
    warped_inst: LabelGrid,
    warped_class: LabelGrid,
    prev: PanopticMap,
    taxonomy: ClassTaxonomy,
    class_strict: bool = True,
) -> IoUMatrix:
    """IoU confusion matrix between warped current and previous instance masks.

    Only thing-class pixels with nonzero instance ids participate. With
    class_strict, pairs whose dominant classes differ score 0.
    """
    if warped_inst.values.shape != prev.classes.values.shape:
        raise DimensionMismatch("warped grids and previous map differ in size")
    if warped_inst.values.shape != warped_class.values.shape:
        raise DimensionMismatch("warped instance and class grids differ in size")

    cur_mask = _thing_mask(warped_class.values, warped_inst.values, taxonomy)
    prev_mask = _thing_mask(prev.classes.values, prev.instances.values, taxonomy)

    cur_ids, cur_areas = np.unique(warped_inst.values[cur_mask], return_counts=True)
    prev_ids, prev_areas = np.unique(prev.instances.values[prev_mask], return_counts=True)
    cur_area = dict(zip(cur_ids.tolist(), cur_areas.tolist()))
    prev_area = dict(zip(prev_ids.tolist(), prev_areas.tolist()))

    both = cur_mask & prev_mask
    joint = warped_inst.values[both].astype(np.uint64) << np.uint64(32)
    joint |= prev.instances.values[both].astype(np.uint64)
    pair_keys, pair_counts = np.unique(joint, return_counts=True)

    current_ids = tuple(int(i) for i in cur_ids.tolist())
    previous_ids = tuple(int(i) for i in prev_ids.tolist())
    row = {i: r for r, i in enumerate(current_ids)}
    col = {j: c for c, j in enumerate(previous_ids)}
    values = np.zeros((len(current_ids), len(previous_ids)), dtype=np.float64)
    for key, inter in zip(pair_keys.tolist(), pair_counts.tolist()):
        i = key >> 32
        j = key & 0xFFFFFFFF
        union = cur_area[i] + prev_area[j] - inter
        values[row[i], col[j]] = inter / union

    if class_strict and values.size:
        cur_cls = _dominant_class(warped_inst.values, warped_class.values, cur_mask)
        prev_cls = _dominant_class(prev.instances.values, prev.classes.values, prev_mask)
        for i in current_ids:
            for j in previous_ids:
                if cur_cls[i] != prev_cls[j]:
                    values[row[i], col[j]] = 0.0

    return IoUMatrix(current_ids, previous_ids, values)


def _match_greedy(matrix: IoUMatrix, threshold: float) -> dict[int, int]:
    candidates = []
    for r, cur in enumerate(matrix.current_ids):
        for c, prev in enumerate(matrix.previous_ids):
            v = matrix.values[r, c]
            if v >= threshold:
                candidates.append((-v, prev, cur))
    candidates.sort()
    matches: dict[int, int] = {}
    used_prev: set[int] = set()
    for _, prev, cur in candidates:
        if cur in matches or prev in used_prev:
            continue
        matches[cur] = prev
        used_prev.add(prev)
    return matches


def _match_optimal(matrix: IoUMatrix, threshold: float) -> dict[int, int]:
    benefit = np.where(matrix.values >= threshold, matrix.values, 0.0)
    rows, cols = linear_sum_assignment(benefit, maximize=True)
    matches = {}
    for r, c in zip(rows.tolist(), cols.tolist()):
        if matrix.values[r, c] >= threshold:
            matches[matrix.current_ids[r]] = matrix.previous_ids[c]
    return matches


def match_ids(
    matrix: IoUMatrix, threshold: float, method: str = "greedy"
) -> IdAssignment:
    """One-to-one id matching from the IoU matrix.

    Greedy repeatedly takes the largest remaining entry >= threshold
    (ties: lower previous id, then lower current id); "optimal" maximizes
    total IoU over entries >= threshold via the Hungarian method.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold {threshold} outside [0, 1]")
    if method == "greedy":
        matches = _match_greedy(matrix, threshold)
    elif method == "optimal":
        matches = _match_optimal(matrix, threshold)
    else:
        raise ValueError(f"unknown matching method {method!r}")
    fresh = frozenset(matrix.current_ids) - set(matches)
    return IdAssignment(matches=matches, fresh=fresh)


def relabel(
    curr: PanopticMap, assignment: IdAssignment, state: TrackerState
) -> tuple[PanopticMap, TrackerState]:
    """Rewrite instance ids per the assignment; fresh masks get new ids.

    Fresh ids are allocated from state.next_fresh_id in ascending order of
    the original id. The class grid and the nonzero pixel support are
    preserved; the returned counter strictly exceeds every emitted id.
    """
    present = [int(i) for i in np.unique(curr.instances.values) if i != 0]
    uncovered = [i for i in present if i not in assignment.matches and i not in assignment.fresh]
    if uncovered:
        raise IncompleteAssignment(f"ids {uncovered} not covered by the assignment")

    mapping: dict[int, int] = {}
    next_id = state.next_fresh_id
    for old in present:
        if old in assignment.matches:
            mapping[old] = assignment.matches[old]
    for old in sorted(i for i in present if i in assignment.fresh):
        mapping[old] = next_id
        next_id += 1

    out = curr.instances.values.copy()
    for old, new in mapping.items():
        out[curr.instances.values == np.uint32(old)] = new
    emitted = max(mapping.values(), default=0)
    new_state = replace(state, next_fresh_id=max(next_id, emitted + 1))
    return PanopticMap(classes=curr.classes, instances=LabelGrid(out)), new_state


def run_warpmatch_sequence(
    panoptic_seq: Sequence[PanopticMap],
    flows_prev_to_curr: Sequence[FlowField],
    taxonomy: ClassTaxonomy,
    threshold: float = DEFAULT_IOU_THRESHOLD,
    class_strict: bool = True,
    matcher: str = "greedy",
) -> list[PanopticMap]:
    """Run the full pipeline over a sequence; flows[i] maps grid i into frame i+1.

    Frame 0 passes through unchanged. Each later frame is warped backward,
    matched against the previous *output* frame (so consistency is
    transitive) and relabeled. Instances that warp entirely out of view
    cannot match and therefore receive fresh ids.
    """
    if len(flows_prev_to_curr) != max(len(panoptic_seq) - 1, 0):
        raise SequenceLengthMismatch(
            f"{len(panoptic_seq)} frames need {max(len(panoptic_seq) - 1, 0)} flow "
            f"fields, got {len(flows_prev_to_curr)}"
        )
    if not panoptic_seq:
        return []

    first = panoptic_seq[0]
    max_id = int(first.instances.values.max())
    state = TrackerState(next_fresh_id=max_id + 1, prev_map=first)
    out = [first]
    for t in range(1, len(panoptic_seq)):
        curr = panoptic_seq[t]
        warped_inst, warped_class = warp_backward(
            curr.instances, curr.classes, flows_prev_to_curr[t - 1], taxonomy.void_class_id
        )
        matrix = build_iou_matrix(
            warped_inst, warped_class, state.prev_map, taxonomy, class_strict
        )
        assignment = match_ids(matrix, threshold, matcher)
        # instances whose warped support vanished never enter the matrix
        present = frozenset(
            int(i) for i in np.unique(curr.instances.values) if i != 0
        )
        missing = present - assignment.covers()
        if missing:
            assignment = IdAssignment(
                matches=assignment.matches, fresh=assignment.fresh | missing
            )
        relabeled, state = relabel(curr, assignment, state)
        state = replace(state, prev_map=relabeled)
        out.append(relabeled)
    return out
