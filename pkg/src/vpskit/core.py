"""Core domain types for video panoptic data plus mask/segment primitives.

Conventions used throughout the toolkit:

* label grids are ``(height, width)`` uint32 arrays, row-major, origin at
  the top-left, x rightward, y downward;
* instance id 0 is the universal "no instance" sentinel, so stuff pixels
  always carry instance 0;
* a segment is the set of pixels sharing one ``(class_id, instance_id)``
  pair; segments are equivalence classes, not connected components, and
  may be fragmented.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, InvalidTaxonomy, NonFinite, UnknownClass

STUFF = "stuff"
THING = "thing"

_MAX_LABEL = (1 << 32) - 1


@dataclass(frozen=True)
class ClassEntry:
    class_id: int
    name: str
    kind: str

    def __post_init__(self):
        if not 0 <= self.class_id <= _MAX_LABEL:
            raise InvalidTaxonomy(f"class id {self.class_id} outside the 32-bit label range")
        if self.kind not in (STUFF, THING):
            raise InvalidTaxonomy(f"class {self.class_id}: kind {self.kind!r} is not 'stuff' or 'thing'")


@dataclass(frozen=True)
class ClassTaxonomy:
    """Class id -> (name, stuff/thing) table governing which pixels carry ids."""

    entries: tuple[ClassEntry, ...]
    void_class_id: int = 0

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        ids = [e.class_id for e in entries]
        if len(set(ids)) != len(ids):
            raise InvalidTaxonomy("duplicate class ids")
        by_id = {e.class_id: e for e in entries}
        void = by_id.get(self.void_class_id)
        if void is None:
            raise InvalidTaxonomy(f"void class {self.void_class_id} missing from entries")
        if void.kind != STUFF:
            raise InvalidTaxonomy(f"void class {self.void_class_id} must be stuff")
        object.__setattr__(self, "_by_id", by_id)

    def has(self, class_id: int) -> bool:
        return class_id in self._by_id

    def kind_of(self, class_id: int) -> str:
        entry = self._by_id.get(class_id)
        if entry is None:
            raise UnknownClass(f"class {class_id} not in taxonomy")
        return entry.kind

    def name_of(self, class_id: int) -> str:
        entry = self._by_id.get(class_id)
        if entry is None:
            raise UnknownClass(f"class {class_id} not in taxonomy")
        return entry.name

    def is_thing(self, class_id: int) -> bool:
        return self.kind_of(class_id) == THING

    def is_stuff(self, class_id: int) -> bool:
        return self.kind_of(class_id) == STUFF

    def class_ids(self) -> list[int]:
        return sorted(self._by_id)

    def thing_class_ids(self) -> list[int]:
        return sorted(e.class_id for e in self.entries if e.kind == THING)

    def stuff_class_ids(self) -> list[int]:
        return sorted(e.class_id for e in self.entries if e.kind == STUFF)

    def to_dict(self) -> dict:
        return {
            "void_class_id": self.void_class_id,
            "classes": [
                {"id": e.class_id, "name": e.name, "kind": e.kind} for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassTaxonomy":
        try:
            entries = tuple(
                ClassEntry(int(c["id"]), str(c["name"]), str(c["kind"]))
                for c in data["classes"]
            )
            void = int(data.get("void_class_id", 0))
        except (KeyError, TypeError) as exc:
            raise InvalidTaxonomy(f"malformed taxonomy document: {exc}") from exc
        return cls(entries=entries, void_class_id=void)


def _as_label_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"label grid must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"label grid must be at least 1x1, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"label grid must be integer, got dtype {arr.dtype}")
    if arr.min() < 0:
        raise ValueError("label grid contains negative values")
    if int(arr.max()) > _MAX_LABEL:
        raise ValueError("label grid value exceeds the 32-bit label range")
    out = arr.astype(np.uint32, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LabelGrid:
    """Immutable (height, width) grid of non-negative integer labels."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_label_array(self.values))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def filled(cls, width: int, height: int, value: int = 0) -> "LabelGrid":
        return cls(np.full((height, width), value, dtype=np.uint32))

    @classmethod
    def from_flat(cls, width: int, height: int, flat) -> "LabelGrid":
        arr = np.asarray(flat, dtype=np.int64)
        if arr.size != width * height:
            raise ValueError(f"expected {width * height} values, got {arr.size}")
        return cls(arr.reshape(height, width))

    def __eq__(self, other) -> bool:
        if not isinstance(other, LabelGrid):
            return NotImplemented
        return self.values.shape == other.values.shape and bool(
            np.array_equal(self.values, other.values)
        )

    def __hash__(self):
        return hash((self.values.shape, self.values.tobytes()))


@dataclass(frozen=True)
class PanopticMap:
    """Per-frame pair of class labels and instance ids over the same grid."""

    classes: LabelGrid
    instances: LabelGrid

    def __post_init__(self):
        if self.classes.values.shape != self.instances.values.shape:
            raise DimensionMismatch(
                f"classes {self.classes.width}x{self.classes.height} vs "
                f"instances {self.instances.width}x{self.instances.height}"
            )

    @property
    def width(self) -> int:
        return self.classes.width

    @property
    def height(self) -> int:
        return self.classes.height

    def validate(self, taxonomy: ClassTaxonomy) -> list[str]:
        return validate_panoptic(self.classes, self.instances, taxonomy)


@dataclass(frozen=True)
class FlowField:
    """Per-pixel (dx, dy) displacement grid in fractional pixel units."""

    vectors: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 2:
            raise ValueError(f"flow field must have shape (h, w, 2), got {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"flow field must be at least 1x1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise NonFinite("flow field contains NaN or infinite components")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)

    @property
    def height(self) -> int:
        return self.vectors.shape[0]

    @property
    def width(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def zero(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width, 2), dtype=np.float32))

    @classmethod
    def constant(cls, width: int, height: int, dx: float, dy: float) -> "FlowField":
        vec = np.empty((height, width, 2), dtype=np.float32)
        vec[..., 0] = dx
        vec[..., 1] = dy
        return cls(vec)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FlowField):
            return NotImplemented
        return self.vectors.shape == other.vectors.shape and bool(
            np.array_equal(self.vectors, other.vectors)
        )

    def __hash__(self):
        return hash((self.vectors.shape, self.vectors.tobytes()))


@dataclass(frozen=True)
class Segment:
    """All pixels carrying one (class_id, instance_id) pair; may be fragmented."""

    class_id: int
    instance_id: int
    pixels: frozenset = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "pixels", frozenset(self.pixels))
        if not self.pixels:
            raise ValueError("segment has no pixels")

    @property
    def area(self) -> int:
        return len(self.pixels)


def iou(a, b) -> float:
    """Intersection over union of two pixel sets; 0.0 when both are empty."""
    a = a if isinstance(a, (set, frozenset)) else frozenset(a)
    b = b if isinstance(b, (set, frozenset)) else frozenset(b)
    if not a and not b:
        return 0.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def _check_known_classes(classes: LabelGrid, taxonomy: ClassTaxonomy) -> None:
    present = np.unique(classes.values)
    known = np.array(taxonomy.class_ids(), dtype=np.uint32)
    unknown = present[~np.isin(present, known)]
    if unknown.size:
        ys, xs = np.nonzero(classes.values == unknown[0])
        raise UnknownClass(
            f"class {int(unknown[0])} at pixel ({int(xs[0])}, {int(ys[0])}) not in taxonomy"
        )


def _pair_keys(classes: np.ndarray, instances: np.ndarray) -> np.ndarray:
    return classes.astype(np.uint64) << np.uint64(32) | instances.astype(np.uint64)


def extract_segments(pmap: PanopticMap, taxonomy: ClassTaxonomy) -> list[Segment]:
    """Split a panoptic map into its (class, instance) segments.

    Void-class pixels are excluded; every other pixel lands in exactly one
    segment, so the result partitions the non-void area. Thing-class pixels
    with instance 0 form an "unassigned" segment for their class.
    """
    _check_known_classes(pmap.classes, taxonomy)
    keys = _pair_keys(pmap.classes.values, pmap.instances.values)
    valid = pmap.classes.values != np.uint32(taxonomy.void_class_id)
    segments = []
    for key in np.unique(keys[valid]):
        class_id = int(key >> np.uint64(32))
        instance_id = int(key & np.uint64(0xFFFFFFFF))
        ys, xs = np.nonzero((keys == key) & valid)
        pixels = frozenset(zip(xs.tolist(), ys.tolist()))
        segments.append(Segment(class_id, instance_id, pixels))
    segments.sort(key=lambda s: (s.class_id, s.instance_id))
    return segments


def validate_panoptic(
    classes: LabelGrid, instances: LabelGrid, taxonomy: ClassTaxonomy
) -> list[str]:
    """Check panoptic invariants; returns human-readable violations, not errors.

    Rules: grids share dimensions, every class id is known, and stuff-class
    pixels carry instance 0. An empty list means the pair is valid.
    """
    violations: list[str] = []
    if classes.values.shape != instances.values.shape:
        violations.append(
            f"dimension mismatch: classes {classes.width}x{classes.height} vs "
            f"instances {instances.width}x{instances.height}"
        )
        return violations

    present = np.unique(classes.values)
    for class_id in present.tolist():
        if not taxonomy.has(class_id):
            ys, xs = np.nonzero(classes.values == class_id)
            violations.append(
                f"pixel ({int(xs[0])}, {int(ys[0])}): unknown class {class_id}"
            )

    stuff_ids = [c for c in present.tolist() if taxonomy.has(c) and taxonomy.is_stuff(c)]
    if stuff_ids:
        stuff_mask = np.isin(classes.values, np.array(stuff_ids, dtype=np.uint32))
        bad = stuff_mask & (instances.values != 0)
        ys, xs = np.nonzero(bad)
        for x, y in zip(xs.tolist(), ys.tolist()):
            violations.append(
                f"pixel ({x}, {y}): stuff class {int(classes.values[y, x])} carries "
                f"instance {int(instances.values[y, x])}"
            )
    return violations
