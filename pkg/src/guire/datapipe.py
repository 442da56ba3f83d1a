"""Grounding data plumbing: point unification, composites, mixtures and JSONL shards."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from guire.geometry import BBox, Point, ScreenDims, bbox_center, remap_bbox, translate_point
from guire.schema import SchemaError, known_schemas, validate

logger = logging.getLogger(__name__)

UNIFIED = "unified_grounding.v1"
COMPOSITE = "composite.v1"
MIXTURE = "mixture_manifest.v1"


class DataError(ValueError):
    pass


class OutOfBounds(DataError):
    pass


class Exhausted(DataError):
    pass


class SchemaVersionMismatch(DataError):
    pass


class MalformedLine(DataError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class DataIoError(DataError, OSError):
    pass


Target = Union[BBox, Point]


def _target_doc(t: Target) -> dict:
    if isinstance(t, BBox):
        return {"bbox": t.as_list()}
    return {"point": t.as_list()}


def _target_from(doc: dict) -> Target:
    if "bbox" in doc:
        return BBox.from_list(doc["bbox"])
    return Point(*doc["point"])


# --------------------------------------------------------------------------- unify


@dataclass(frozen=True)
class SourceTag:
    dataset: str
    platform: str = "mobile"
    kind: str = "grounding"

    def as_dict(self) -> dict:
        return {"dataset": self.dataset, "platform": self.platform, "kind": self.kind}


@dataclass(frozen=True)
class SourceRecord:
    image_ref: Optional[str]
    dims: ScreenDims
    instruction: str
    target: Target
    source: SourceTag

    def check(self) -> None:
        t = self.target
        if isinstance(t, BBox):
            ok = self.dims.contains_bbox(t)
        else:
            ok = self.dims.contains_point(t)
        if not ok:
            raise OutOfBounds(f"target {t} exceeds image {self.dims.width}x{self.dims.height}")

    @classmethod
    def from_dict(cls, d: dict) -> "SourceRecord":
        src = d.get("source", {})
        if isinstance(src, str):
            src = {"dataset": src}
        try:
            return cls(d.get("image_ref"), ScreenDims(*d["dims"]), d["instruction"], _target_from(d),
                       SourceTag(**src))
        except (KeyError, TypeError) as e:
            raise DataError(f"bad source record: {e}") from e


@dataclass(frozen=True)
class UnifiedGroundingRecord:
    image_ref: Optional[str]
    dims: ScreenDims
    instruction: str
    point: Point
    original: Target
    source: SourceTag
    bbox: Optional[BBox] = None

    def as_dict(self) -> dict:
        return {
            "schema_version": UNIFIED,
            "image_ref": self.image_ref,
            "dims": [self.dims.width, self.dims.height],
            "instruction": self.instruction,
            "point": self.point.as_list(),
            "bbox": self.bbox.as_list() if self.bbox else None,
            "provenance": {"original": _target_doc(self.original), "source": self.source.as_dict()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UnifiedGroundingRecord":
        prov = d["provenance"]
        return cls(d.get("image_ref"), ScreenDims(*d["dims"]), d["instruction"], Point(*d["point"]),
                   _target_from(prov["original"]), SourceTag(**prov["source"]),
                   BBox.from_list(d["bbox"]) if d.get("bbox") else None)

    def as_source(self) -> SourceRecord:
        return SourceRecord(self.image_ref, self.dims, self.instruction, self.bbox or self.point, self.source)


def unify(record: SourceRecord) -> UnifiedGroundingRecord:
    """Box targets become their center (box kept); point targets pass through."""
    record.check()
    t = record.target
    if isinstance(t, BBox):
        return UnifiedGroundingRecord(record.image_ref, record.dims, record.instruction, bbox_center(t),
                                      t, record.source, t)
    return UnifiedGroundingRecord(record.image_ref, record.dims, record.instruction, t, t, record.source)


# --------------------------------------------------------------------------- composites


@dataclass(frozen=True)
class CompositeSpec:
    rows: int
    cols: int
    cells: tuple[SourceRecord, ...]
    root: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if self.rows < 1 or self.cols < 1:
            raise DataError("grid must be at least 1x1")
        if self.rows * self.cols != len(self.cells):
            raise DataError(f"{self.rows}x{self.cols} grid needs {self.rows * self.cols} cells, got {len(self.cells)}")

    def slot_sizes(self) -> tuple[list[int], list[int]]:
        col_w = [0] * self.cols
        row_h = [0] * self.rows
        for i, c in enumerate(self.cells):
            r, k = divmod(i, self.cols)
            col_w[k] = max(col_w[k], c.dims.width)
            row_h[r] = max(row_h[r], c.dims.height)
        return col_w, row_h

    def offsets(self) -> list[Point]:
        col_w, row_h = self.slot_sizes()
        xs = np.concatenate([[0], np.cumsum(col_w)[:-1]]).astype(int)
        ys = np.concatenate([[0], np.cumsum(row_h)[:-1]]).astype(int)
        return [Point(int(xs[i % self.cols]), int(ys[i // self.cols])) for i in range(len(self.cells))]

    def dims(self) -> ScreenDims:
        col_w, row_h = self.slot_sizes()
        return ScreenDims(sum(col_w), sum(row_h))


@dataclass
class CompositeResult:
    record: dict
    image: object = None
    errors: dict[int, str] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.errors


def _open_cell(root: Optional[str], rec: SourceRecord):
    from PIL import Image

    path = Path(rec.image_ref)
    if root is not None and not path.is_absolute():
        path = Path(root) / path
    img = Image.open(path)
    img.load()
    if img.size != (rec.dims.width, rec.dims.height):
        raise DataError(f"image is {img.size[0]}x{img.size[1]}, record says {rec.dims.width}x{rec.dims.height}")
    return img


def compose(spec: CompositeSpec, image_ref: Optional[str] = None) -> CompositeResult:
    """Pack cells row-major into uniform slots and translate every annotation.

    Cells sit top-left in their slot; slot widths are per-column maxima and slot
    heights per-row maxima. Pixels are composited only when every cell image is
    readable; otherwise the record is coordinate-only and per-cell read errors
    are reported in ``errors`` (the batch carries on).
    """
    offsets = spec.offsets()
    dims = spec.dims()
    errors: dict[int, str] = {}
    images: list = []
    for i, c in enumerate(spec.cells):
        c.check()
        if c.image_ref is None:
            images.append(None)
            continue
        try:
            images.append(_open_cell(spec.root, c))
        except Exception as e:  # unreadable or mismatched image: report, keep going
            errors[i] = f"{type(e).__name__}: {e}"
            images.append(None)
    canvas = None
    if images and all(im is not None for im in images):
        from PIL import Image

        canvas = Image.new("RGB", (dims.width, dims.height))
        for im, off in zip(images, offsets):
            canvas.paste(im.convert("RGB"), (off.x, off.y))

    cells, annotations = [], []
    for i, (c, off) in enumerate(zip(spec.cells, offsets)):
        cells.append({"index": i, "source_ref": c.image_ref, "offset": off.as_list(),
                      "dims": [c.dims.width, c.dims.height], "error": errors.get(i)})
        u = unify(c)
        annotations.append({
            "cell": i,
            "instruction": c.instruction,
            "point": translate_point(off, u.point).as_list(),
            "bbox": remap_bbox(off, u.bbox).as_list() if u.bbox else None,
        })
    record = {
        "schema_version": COMPOSITE,
        "image_ref": image_ref if canvas is not None else None,
        "dims": [dims.width, dims.height],
        "grid": [spec.rows, spec.cols],
        "cells": cells,
        "annotations": annotations,
    }
    return CompositeResult(record, canvas, errors)


def compose_all(records: Sequence[SourceRecord], rows: int = 2, cols: int = 2,
                root: Optional[str] = None) -> list[CompositeResult]:
    """Chunk records into rows x cols composites; a short tail is dropped."""
    k = rows * cols
    return [compose(CompositeSpec(rows, cols, tuple(records[i:i + k]), root))
            for i in range(0, len(records) - k + 1, k)]


# --------------------------------------------------------------------------- mixtures


@dataclass(frozen=True)
class MixtureWeights:
    weights: Mapping[str, float]

    def __post_init__(self):
        w = dict(self.weights)
        if any(not np.isfinite(v) or v < 0 for v in w.values()):
            raise DataError("mixture weights must be finite and non-negative")
        if not any(v > 0 for v in w.values()):
            raise DataError("at least one mixture weight must be positive")
        object.__setattr__(self, "weights", w)

    def normalized(self) -> dict[str, float]:
        total = sum(self.weights.values())
        return {k: v / total for k, v in self.weights.items()}


def sample_mixture(streams: Mapping[str, Sequence], weights: MixtureWeights | Mapping[str, float],
                   seed: int, n: int) -> list[tuple[str, object]]:
    """Deterministic weighted interleave of ``n`` items.

    At each draw the tag whose realized count lags its weighted target the most
    is taken (seeded tie-break order), so realized proportions never drift more
    than one item from the weights. Each stream is consumed in order, without
    replacement.
    """
    if not isinstance(weights, MixtureWeights):
        weights = MixtureWeights(weights)
    share = weights.normalized()
    tags = sorted(t for t, w in share.items() if w > 0)
    missing = [t for t in tags if t not in streams]
    if missing:
        raise DataError(f"no stream for weighted tags {missing}")
    rng = np.random.default_rng(seed)
    rank = {t: int(r) for t, r in zip(tags, rng.permutation(len(tags)))}
    taken = {t: 0 for t in tags}
    out = []
    for i in range(1, n + 1):
        tag = max(tags, key=lambda t: (i * share[t] - taken[t], -rank[t]))
        stream = streams[tag]
        if taken[tag] >= len(stream):
            raise Exhausted(f"stream {tag!r} ran dry after {taken[tag]} items ({i - 1} of {n} drawn)")
        out.append((tag, stream[taken[tag]]))
        taken[tag] += 1
    return out


def mixture_manifest(weights: MixtureWeights | Mapping[str, float], seed: int, n: int,
                     drawn: Sequence[tuple[str, object]], root: str = ".") -> dict:
    if not isinstance(weights, MixtureWeights):
        weights = MixtureWeights(weights)
    counts: dict[str, int] = {t: 0 for t in weights.weights}
    for tag, _ in drawn:
        counts[tag] = counts.get(tag, 0) + 1
    return {"schema_version": MIXTURE, "root": root, "seed": seed, "n": n,
            "weights": dict(weights.weights), "counts": counts}


# --------------------------------------------------------------------------- JSONL


def dumps_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict], schema_version: Optional[str] = None) -> int:
    """Write one record per line; every record must carry schema_version."""
    count = 0
    try:
        with open(path, "w", encoding="utf-8") as f:
            for rec in records:
                if schema_version is not None:
                    rec = {"schema_version": schema_version, **rec}
                if "schema_version" not in rec:
                    raise DataError(f"record {count} has no schema_version")
                f.write(dumps_line(rec) + "\n")
                count += 1
    except OSError as e:
        raise DataIoError(f"cannot write {path}: {e}") from e
    return count


def read_jsonl(path, expected_version: Optional[str] = None, strict: bool = True,
               errors: Optional[list] = None, check_schema: bool = True) -> list[dict]:
    """Read records, failing fast (strict) or skipping bad lines into ``errors``.

    A schema_version other than ``expected_version`` always raises, since it
    signals a forward-incompatible shard. Known versions are validated against
    their shipped JSON Schema when ``check_schema`` is set.
    """
    known = set(known_schemas()) if check_schema else set()
    out = []
    try:
        f = open(path, encoding="utf-8")
    except OSError as e:
        raise DataIoError(f"cannot read {path}: {e}") from e
    with f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise DataError("line is not a JSON object")
                version = rec.get("schema_version")
                if not isinstance(version, str):
                    raise DataError("missing schema_version")
                if expected_version is not None and version != expected_version:
                    raise SchemaVersionMismatch(
                        f"{path}:{lineno}: expected {expected_version}, found {version}")
                if version in known:
                    validate(rec, version)
            except SchemaVersionMismatch:
                raise
            except (ValueError, SchemaError) as e:
                err = MalformedLine(path, lineno, str(e))
                if strict:
                    raise err from e
                logger.warning("%s", err)
                if errors is not None:
                    errors.append(err)
                continue
            out.append(rec)
    return out


class JsonlSink:
    """Append-only shard writer shared by concurrent producers."""

    def __init__(self, path, schema_version: Optional[str] = None):
        self.path = path
        self.schema_version = schema_version
        self.count = 0
        self._lock = threading.Lock()
        try:
            self._f = open(path, "w", encoding="utf-8")
        except OSError as e:
            raise DataIoError(f"cannot write {path}: {e}") from e

    def write(self, record: dict) -> None:
        if self.schema_version is not None:
            record = {"schema_version": self.schema_version, **record}
        if "schema_version" not in record:
            raise DataError("record has no schema_version")
        line = dumps_line(record) + "\n"
        with self._lock:
            self._f.write(line)
            self.count += 1

    def close(self) -> None:
        with self._lock:
            self._f.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
