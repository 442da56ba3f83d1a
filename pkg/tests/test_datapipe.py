from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from PIL import Image

from guire.datapipe import (
    CompositeSpec,
    DataError,
    Exhausted,
    MalformedLine,
    MixtureWeights,
    OutOfBounds,
    SchemaVersionMismatch,
    SourceRecord,
    SourceTag,
    UnifiedGroundingRecord,
    compose,
    mixture_manifest,
    read_jsonl,
    sample_mixture,
    unify,
    write_jsonl,
)
from guire.geometry import BBox, Point, ScreenDims, bbox_center, contains
from guire.schema import validate

TAG = SourceTag("fixture", "mobile", "grounding")


def rec(target, w=100, h=100, ref=None, instr="find it"):
    return SourceRecord(ref, ScreenDims(w, h), instr, target, TAG)


def test_unify_examples():
    u = unify(rec(BBox(10, 20, 30, 60)))
    assert u.point == Point(20, 40) and u.bbox == BBox(10, 20, 30, 60)
    u = unify(rec(Point(7, 9)))
    assert u.point == Point(7, 9) and u.bbox is None and u.original == Point(7, 9)
    with pytest.raises(OutOfBounds):
        unify(rec(BBox(50, 50, 120, 60)))
    with pytest.raises(OutOfBounds):
        unify(rec(Point(100, 5)))


def test_unified_record_schema_and_round_trip():
    u = unify(rec(BBox(10, 20, 30, 60), ref="a.png"))
    d = u.as_dict()
    validate(d, "unified_grounding.v1")
    assert UnifiedGroundingRecord.from_dict(d) == u
    assert d["provenance"] == {"original": {"bbox": [10, 20, 30, 60]},
                               "source": {"dataset": "fixture", "platform": "mobile", "kind": "grounding"}}


targets = st.one_of(
    st.tuples(st.integers(0, 80), st.integers(0, 80), st.integers(1, 19), st.integers(1, 19)).map(
        lambda t: BBox(t[0], t[1], t[0] + t[2], t[1] + t[3])),
    st.tuples(st.integers(0, 99), st.integers(0, 99)).map(lambda t: Point(*t)),
)


@given(targets)
def test_unify_idempotent_and_center(t):
    u = unify(rec(t))
    assert unify(u.as_source()) == u
    if u.bbox is not None:
        assert u.point == bbox_center(u.bbox)


def test_compose_identity():
    r = compose(CompositeSpec(1, 1, (rec(BBox(1, 2, 3, 4)),)))
    assert r.record["cells"][0]["offset"] == [0, 0]
    assert r.record["annotations"][0]["bbox"] == [1, 2, 3, 4]
    assert r.record["dims"] == [100, 100] and r.record["image_ref"] is None
    validate(r.record, "composite.v1")


def test_compose_offsets():
    r = compose(CompositeSpec(1, 2, (rec(Point(1, 1)), rec(Point(5, 5)))))
    assert r.record["annotations"][1]["point"] == [105, 5]
    assert r.record["dims"] == [200, 100]


def test_compose_uniform_slots():
    cells = (rec(Point(0, 0), 50, 40), rec(Point(0, 0), 80, 30), rec(Point(0, 0), 60, 70), rec(Point(3, 4), 20, 10))
    spec = CompositeSpec(2, 2, cells)
    assert spec.slot_sizes() == ([60, 80], [40, 70])
    out = compose(spec).record
    assert [c["offset"] for c in out["cells"]] == [[0, 0], [60, 0], [0, 40], [60, 40]]
    assert out["annotations"][3]["point"] == [63, 44] and out["dims"] == [140, 110]


def test_compose_grid_mismatch():
    with pytest.raises(DataError):
        CompositeSpec(2, 2, (rec(Point(0, 0)),))


def test_compose_containment_and_size_preserved():
    rng = np.random.default_rng(0)
    for _ in range(200):
        cells = []
        for _ in range(4):
            w, h = (int(v) for v in rng.integers(20, 200, 2))
            x0, y0 = int(rng.integers(0, w - 5)), int(rng.integers(0, h - 5))
            x1, y1 = int(rng.integers(x0 + 1, w + 1)), int(rng.integers(y0 + 1, h + 1))
            cells.append(rec(BBox(x0, y0, x1, y1), w, h))
        spec = CompositeSpec(2, 2, tuple(cells))
        out = compose(spec).record
        for c, ann, off in zip(cells, out["annotations"], spec.offsets()):
            rb = BBox.from_list(ann["bbox"])
            assert (rb.width, rb.height) == (c.target.width, c.target.height)
            p = Point(int(rng.integers(c.dims.width)), int(rng.integers(c.dims.height)))
            q = Point(p.x + off.x, p.y + off.y)
            assert contains(rb, q) == contains(c.target, p)


def test_compose_pixels(tmp_path):
    Image.new("RGB", (10, 10), (255, 0, 0)).save(tmp_path / "a.png")
    Image.new("RGB", (10, 10), (0, 0, 255)).save(tmp_path / "b.png")
    spec = CompositeSpec(1, 2, (rec(Point(1, 1), 10, 10, "a.png"), rec(Point(1, 1), 10, 10, "b.png")), str(tmp_path))
    r = compose(spec, image_ref="out.png")
    assert r.ok and r.image.size == (20, 10)
    assert r.image.getpixel((15, 5)) == (0, 0, 255) and r.record["image_ref"] == "out.png"


def test_compose_read_failure_is_per_cell(tmp_path):
    Image.new("RGB", (10, 10)).save(tmp_path / "a.png")
    spec = CompositeSpec(1, 2, (rec(Point(1, 1), 10, 10, "a.png"), rec(Point(1, 1), 10, 10, "missing.png")),
                         str(tmp_path))
    r = compose(spec, image_ref="out.png")
    assert set(r.errors) == {1} and r.image is None and r.record["image_ref"] is None
    assert r.record["cells"][1]["error"] and r.record["annotations"][1]["point"] == [11, 1]


def test_mixture_balanced():
    streams = {"nav": list(range(6000)), "ground": list(range(6000))}
    out = sample_mixture(streams, {"nav": 1, "ground": 1}, seed=0, n=10_000)
    counts = {t: sum(1 for tag, _ in out if tag == t) for t in streams}
    assert abs(counts["nav"] - 5000) <= 100 and abs(counts["ground"] - 5000) <= 100
    assert [v for tag, v in out if tag == "nav"] == list(range(counts["nav"]))


def test_mixture_edges():
    assert sample_mixture({"a": [1, 2, 3]}, {"a": 1}, 0, 3) == [("a", 1), ("a", 2), ("a", 3)]
    out = sample_mixture({"a": list(range(10)), "b": []}, {"a": 1, "b": 0}, 0, 10)
    assert all(tag == "a" for tag, _ in out)
    with pytest.raises(Exhausted):
        sample_mixture({"a": [1], "b": [1, 2, 3]}, {"a": 1, "b": 1}, 0, 4)
    with pytest.raises(DataError):
        MixtureWeights({"a": 0.0})
    with pytest.raises(DataError):
        MixtureWeights({"a": -1.0, "b": 2.0})


def test_mixture_deterministic_and_weighted():
    streams = {"a": list(range(20000)), "b": list(range(20000)), "c": list(range(20000))}
    w = {"a": 3, "b": 1, "c": 1}
    x = sample_mixture(streams, w, 5, 10_000)
    assert x == sample_mixture(streams, w, 5, 10_000)
    counts = mixture_manifest(w, 5, 10_000, x)["counts"]
    assert abs(counts["a"] / 10_000 - 0.6) <= 0.01 and abs(counts["b"] / 10_000 - 0.2) <= 0.01
    validate(mixture_manifest(w, 5, 10_000, x), "mixture_manifest.v1")


def test_jsonl_round_trip(tmp_path):
    recs = []
    for i in range(1000):
        if i % 2:
            recs.append(unify(rec(Point(i % 100, 3))).as_dict())
        else:
            recs.append({"schema_version": "misc.v0", "i": i, "s": "é\n\"", "f": i / 7})
    path = tmp_path / "x.jsonl"
    assert write_jsonl(path, recs) == 1000
    assert read_jsonl(path) == recs


def test_jsonl_errors(tmp_path):
    path = tmp_path / "bad.jsonl"
    good = json.dumps({"schema_version": "misc.v0", "a": 1})
    path.write_text(good + "\n" + '{"schema_version": "misc.v0", "a"' + "\n" + good + "\n")
    with pytest.raises(MalformedLine) as info:
        read_jsonl(path)
    assert info.value.line == 2
    errors = []
    assert len(read_jsonl(path, strict=False, errors=errors)) == 2
    assert [e.line for e in errors] == [2]
    with pytest.raises(SchemaVersionMismatch):
        read_jsonl(path, "other.v1", strict=False)
    (tmp_path / "nover.jsonl").write_text('{"a": 1}\n')
    with pytest.raises(MalformedLine):
        read_jsonl(tmp_path / "nover.jsonl")
    (tmp_path / "empty.jsonl").write_text("")
    assert read_jsonl(tmp_path / "empty.jsonl") == []
    with pytest.raises(OSError):
        read_jsonl(tmp_path / "missing.jsonl")


def test_schema_checked_on_read(tmp_path):
    d = unify(rec(Point(1, 1))).as_dict()
    d["point"] = [1.5, 1]
    path = tmp_path / "u.jsonl"
    path.write_text(json.dumps(d) + "\n")
    with pytest.raises(MalformedLine):
        read_jsonl(path, "unified_grounding.v1")


def test_write_requires_version(tmp_path):
    with pytest.raises(DataError):
        write_jsonl(tmp_path / "x.jsonl", [{"a": 1}])
