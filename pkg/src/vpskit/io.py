"""Bit-exact serialization: LMAP label grids, Middlebury flow, track JSONL, manifests.

LMAP layout: magic ``LMAP``, uint32-LE width, uint32-LE height, then
width*height uint32-LE values row-major from the top-left. Flow files use
the Middlebury layout: float32-LE sentinel 202021.25, int32-LE width and
height, then two float32-LE components (dx, dy) per pixel, row-major.
Track files are JSON Lines with exactly the keys
frame/track_id/class_id/x0/y0/x1/y1 per object. Sequence manifests are
JSON documents tying per-frame files, optional flow files (with an
explicit direction tag) and the taxonomy together.

Readers never crash on malformed input; they raise the structured errors
from vpskit.errors. All writers go through a temp file and an atomic
rename.
"""

from __future__ import annotations

import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ClassTaxonomy, FlowField, LabelGrid, PanopticMap
from .errors import BadMagic, FormatError, NonFinite, Overflow, ParseError, Truncated
from .fillfuse import TrackedBox

LMAP_MAGIC = b"LMAP"
FLO_SENTINEL = 202021.25
MANIFEST_VERSION = "vps-seq-1"
FLOW_PREV_TO_CURR = "prev_to_curr"
FLOW_CURR_TO_PREV = "curr_to_prev"

_MAX_PIXELS = 1 << 28  # sanity cap against hostile headers

_TRACK_KEYS = ("frame", "track_id", "class_id", "x0", "y0", "x1", "y1")


def _atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _atomic_write_text(path: str | Path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# ---------------------------------------------------------------- label grids

def encode_label_grid(grid: LabelGrid) -> bytes:
    header = LMAP_MAGIC + struct.pack("<II", grid.width, grid.height)
    return header + grid.values.astype("<u4").tobytes()


def decode_label_grid(data: bytes) -> LabelGrid:
    if len(data) < 4:
        raise Truncated(f"LMAP needs at least 4 bytes, got {len(data)}")
    if data[:4] != LMAP_MAGIC:
        raise BadMagic(f"expected {LMAP_MAGIC!r}, got {data[:4]!r}")
    if len(data) < 12:
        raise Truncated(f"LMAP header needs 12 bytes, got {len(data)}")
    width, height = struct.unpack("<II", data[4:12])
    if width < 1 or height < 1:
        raise FormatError(f"LMAP dimensions {width}x{height} invalid")
    if width * height > _MAX_PIXELS:
        raise Overflow(f"LMAP declares {width * height} pixels, cap is {_MAX_PIXELS}")
    expected = 12 + 4 * width * height
    if len(data) < expected:
        raise Truncated(f"LMAP payload needs {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise Truncated(f"LMAP has {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype="<u4", count=width * height, offset=12)
    return LabelGrid(values.reshape(height, width).astype(np.uint32))


def write_label_grid(grid: LabelGrid, path: str | Path) -> None:
    _atomic_write_bytes(path, encode_label_grid(grid))


def read_label_grid(path: str | Path) -> LabelGrid:
    return decode_label_grid(Path(path).read_bytes())


# ---------------------------------------------------------------- flow fields

def encode_flow(flow: FlowField) -> bytes:
    if not np.isfinite(flow.vectors).all():
        raise NonFinite("flow field contains NaN or infinite components")
    header = struct.pack("<fii", FLO_SENTINEL, flow.width, flow.height)
    return header + flow.vectors.astype("<f4").tobytes()


def decode_flow(data: bytes) -> FlowField:
    if len(data) < 4:
        raise Truncated(f"flow file needs at least 4 bytes, got {len(data)}")
    (sentinel,) = struct.unpack("<f", data[:4])
    if sentinel != np.float32(FLO_SENTINEL):
        raise BadMagic(f"expected flow sentinel {FLO_SENTINEL}, got {sentinel}")
    if len(data) < 12:
        raise Truncated(f"flow header needs 12 bytes, got {len(data)}")
    width, height = struct.unpack("<ii", data[4:12])
    if width < 1 or height < 1:
        raise FormatError(f"flow dimensions {width}x{height} invalid")
    if width * height > _MAX_PIXELS:
        raise Overflow(f"flow declares {width * height} pixels, cap is {_MAX_PIXELS}")
    expected = 12 + 8 * width * height
    if len(data) < expected:
        raise Truncated(f"flow payload needs {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise Truncated(f"flow file has {len(data) - expected} trailing bytes")
    raw = np.frombuffer(data, dtype="<f4", count=2 * width * height, offset=12)
    vectors = raw.reshape(height, width, 2).astype(np.float32)
    if not np.isfinite(vectors).all():
        raise NonFinite("flow file contains NaN or infinite components")
    return FlowField(vectors)


def write_flow(flow: FlowField, path: str | Path) -> None:
    _atomic_write_bytes(path, encode_flow(flow))


def read_flow(path: str | Path) -> FlowField:
    return decode_flow(Path(path).read_bytes())


# --------------------------------------------------------------------- tracks

def _track_to_obj(box: TrackedBox) -> dict:
    return {
        "frame": box.frame,
        "track_id": box.track_id,
        "class_id": box.class_id,
        "x0": box.x0,
        "y0": box.y0,
        "x1": box.x1,
        "y1": box.y1,
    }


def _require_int(obj: dict, key: str, line: int) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"line {line}: {key} must be an integer, got {value!r}")
    return value


def _require_number(obj: dict, key: str, line: int) -> float:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ParseError(f"line {line}: {key} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ParseError(f"line {line}: {key} must be finite, got {value!r}")
    return float(value)


def parse_track_line(text: str, line: int) -> TrackedBox:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {line}: invalid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError(f"line {line}: expected an object, got {type(obj).__name__}")
    unknown = set(obj) - set(_TRACK_KEYS)
    if unknown:
        raise ParseError(f"line {line}: unknown keys {sorted(unknown)}")
    missing = set(_TRACK_KEYS) - set(obj)
    if missing:
        raise ParseError(f"line {line}: missing keys {sorted(missing)}")
    try:
        return TrackedBox(
            frame=_require_int(obj, "frame", line),
            track_id=_require_int(obj, "track_id", line),
            class_id=_require_int(obj, "class_id", line),
            x0=_require_number(obj, "x0", line),
            y0=_require_number(obj, "y0", line),
            x1=_require_number(obj, "x1", line),
            y1=_require_number(obj, "y1", line),
        )
    except ValueError as exc:
        raise ParseError(f"line {line}: {exc}") from exc


def read_tracks(path: str | Path) -> list[TrackedBox]:
    boxes = []
    for line_no, line in enumerate(Path(path).read_text("utf-8").splitlines(), start=1):
        if line.strip():
            boxes.append(parse_track_line(line, line_no))
    return boxes


def write_tracks(boxes: Sequence[TrackedBox], path: str | Path) -> None:
    ordered = sorted(boxes, key=lambda b: (b.frame, b.track_id))
    lines = [json.dumps(_track_to_obj(b), separators=(", ", ": ")) for b in ordered]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


# ------------------------------------------------------------------- taxonomy

def read_taxonomy(path: str | Path) -> ClassTaxonomy:
    try:
        data = json.loads(Path(path).read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    return ClassTaxonomy.from_dict(data)


def write_taxonomy(taxonomy: ClassTaxonomy, path: str | Path) -> None:
    _atomic_write_text(path, json.dumps(taxonomy.to_dict(), indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ manifests

@dataclass(frozen=True)
class FrameRef:
    classes: str
    instances: str | None = None


@dataclass(frozen=True)
class FlowSetRef:
    direction: str
    paths: tuple[str, ...]


@dataclass(frozen=True)
class SequenceManifest:
    frame_count: int
    frames: tuple[FrameRef, ...]
    taxonomy: ClassTaxonomy | None = None
    flows: FlowSetRef | None = None
    version: str = MANIFEST_VERSION


def manifest_to_dict(manifest: SequenceManifest) -> dict:
    doc: dict = {
        "version": manifest.version,
        "frame_count": manifest.frame_count,
        "frames": [
            {"classes": f.classes, **({"instances": f.instances} if f.instances else {})}
            for f in manifest.frames
        ],
    }
    if manifest.taxonomy is not None:
        doc["taxonomy"] = manifest.taxonomy.to_dict()
    if manifest.flows is not None:
        doc["flows"] = {
            "direction": manifest.flows.direction,
            "paths": list(manifest.flows.paths),
        }
    return doc


def write_manifest(manifest: SequenceManifest, path: str | Path) -> None:
    _atomic_write_text(
        path, json.dumps(manifest_to_dict(manifest), indent=2, sort_keys=True) + "\n"
    )


def read_manifest(path: str | Path) -> SequenceManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text("utf-8"))
    except FileNotFoundError:
        raise ParseError(f"manifest {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: manifest must be a JSON object")
    if doc.get("version") != MANIFEST_VERSION:
        raise ParseError(f"{path}: unsupported manifest version {doc.get('version')!r}")

    frames_doc = doc.get("frames")
    if not isinstance(frames_doc, list):
        raise ParseError(f"{path}: 'frames' must be a list")
    frames = []
    for i, entry in enumerate(frames_doc):
        if not isinstance(entry, dict) or "classes" not in entry:
            raise ParseError(f"{path}: frame {i} entry malformed")
        frames.append(FrameRef(classes=entry["classes"], instances=entry.get("instances")))
    if doc.get("frame_count") != len(frames):
        raise ParseError(
            f"{path}: frame_count {doc.get('frame_count')} != {len(frames)} frame entries"
        )

    taxonomy = None
    tax_doc = doc.get("taxonomy")
    if isinstance(tax_doc, str):
        taxonomy = read_taxonomy(path.parent / tax_doc)
    elif isinstance(tax_doc, dict):
        taxonomy = ClassTaxonomy.from_dict(tax_doc)
    elif tax_doc is not None:
        raise ParseError(f"{path}: taxonomy must be inline or a file path")

    flows = None
    flows_doc = doc.get("flows")
    if flows_doc is not None:
        if not isinstance(flows_doc, dict):
            raise ParseError(f"{path}: 'flows' must be an object")
        direction = flows_doc.get("direction")
        if direction not in (FLOW_PREV_TO_CURR, FLOW_CURR_TO_PREV):
            raise ParseError(f"{path}: unknown flow direction {direction!r}")
        paths = flows_doc.get("paths")
        if not isinstance(paths, list):
            raise ParseError(f"{path}: flow paths must be a list")
        if len(paths) != max(len(frames) - 1, 0):
            raise ParseError(
                f"{path}: {len(frames)} frames need {max(len(frames) - 1, 0)} flow "
                f"files, manifest lists {len(paths)}"
            )
        flows = FlowSetRef(direction=direction, paths=tuple(paths))

    manifest = SequenceManifest(
        frame_count=len(frames), frames=tuple(frames), taxonomy=taxonomy, flows=flows
    )
    for ref in _all_paths(manifest):
        if not (path.parent / ref).exists():
            raise ParseError(f"{path}: referenced file {ref} does not exist")
    return manifest


def _all_paths(manifest: SequenceManifest) -> list[str]:
    paths = []
    for frame in manifest.frames:
        paths.append(frame.classes)
        if frame.instances:
            paths.append(frame.instances)
    if manifest.flows:
        paths.extend(manifest.flows.paths)
    return paths


# --------------------------------------------------------- sequence (de)serde

def _frame_stem(index: int, count: int) -> str:
    return f"{index:0{max(4, len(str(max(count - 1, 0))))}d}"


def write_panoptic_sequence(
    out_dir: str | Path,
    maps: Sequence[PanopticMap],
    taxonomy: ClassTaxonomy,
    flows: Sequence[FlowField] | None = None,
    flow_direction: str = FLOW_PREV_TO_CURR,
    manifest_name: str = "manifest.json",
) -> Path:
    """Write a full panoptic sequence plus manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, pmap in enumerate(maps):
        stem = _frame_stem(i, len(maps))
        class_name = f"classes_{stem}.lmap"
        inst_name = f"instances_{stem}.lmap"
        write_label_grid(pmap.classes, out_dir / class_name)
        write_label_grid(pmap.instances, out_dir / inst_name)
        frames.append(FrameRef(classes=class_name, instances=inst_name))
    flow_ref = None
    if flows is not None:
        names = []
        for i, flow in enumerate(flows):
            name = f"flow_{_frame_stem(i, len(maps))}.flo"
            write_flow(flow, out_dir / name)
            names.append(name)
        flow_ref = FlowSetRef(direction=flow_direction, paths=tuple(names))
    manifest = SequenceManifest(
        frame_count=len(maps), frames=tuple(frames), taxonomy=taxonomy, flows=flow_ref
    )
    manifest_path = out_dir / manifest_name
    write_manifest(manifest, manifest_path)
    return manifest_path


def write_semantic_sequence(
    out_dir: str | Path,
    grids: Sequence[LabelGrid],
    taxonomy: ClassTaxonomy | None = None,
    manifest_name: str = "manifest.json",
) -> Path:
    """Write a classes-only sequence (no instance grids)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = []
    for i, grid in enumerate(grids):
        name = f"classes_{_frame_stem(i, len(grids))}.lmap"
        write_label_grid(grid, out_dir / name)
        frames.append(FrameRef(classes=name))
    manifest = SequenceManifest(
        frame_count=len(grids), frames=tuple(frames), taxonomy=taxonomy
    )
    manifest_path = out_dir / manifest_name
    write_manifest(manifest, manifest_path)
    return manifest_path


def load_panoptic_sequence(
    manifest_path: str | Path,
) -> tuple[list[PanopticMap], ClassTaxonomy | None]:
    base = Path(manifest_path).parent
    manifest = read_manifest(manifest_path)
    maps = []
    for i, frame in enumerate(manifest.frames):
        if frame.instances is None:
            raise ParseError(
                f"{manifest_path}: frame {i} has no instance grid; "
                "this is a semantic-only sequence"
            )
        classes = read_label_grid(base / frame.classes)
        instances = read_label_grid(base / frame.instances)
        maps.append(PanopticMap(classes=classes, instances=instances))
    return maps, manifest.taxonomy


def load_semantic_sequence(
    manifest_path: str | Path,
) -> tuple[list[LabelGrid], ClassTaxonomy | None]:
    base = Path(manifest_path).parent
    manifest = read_manifest(manifest_path)
    return [read_label_grid(base / f.classes) for f in manifest.frames], manifest.taxonomy


def load_flow_sequence(manifest_path: str | Path) -> tuple[list[FlowField], str]:
    base = Path(manifest_path).parent
    manifest = read_manifest(manifest_path)
    if manifest.flows is None:
        raise ParseError(f"{manifest_path}: manifest carries no flow fields")
    flows = [read_flow(base / p) for p in manifest.flows.paths]
    return flows, manifest.flows.direction
