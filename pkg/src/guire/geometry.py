"""Integer pixel geometry: boxes, centers, containment, zoom-in crops and remapping.

All coordinates are non-negative integer pixels. A point is a pixel index, so a
point lies inside a ``w x h`` image when ``0 <= x < w`` and ``0 <= y < h``.
Boxes are boundary-inclusive for containment.
"""

from __future__ import annotations

from dataclasses import dataclass


class GeometryError(ValueError):
    pass


class OutOfWindow(GeometryError):
    pass


def _check_pixel(name: str, v) -> None:
    if isinstance(v, bool) or not isinstance(v, int):
        raise GeometryError(f"{name} must be an integer pixel value, got {v!r}")
    if v < 0:
        raise GeometryError(f"{name} must be non-negative, got {v}")


@dataclass(frozen=True)
class Point:
    x: int
    y: int

    def __post_init__(self):
        _check_pixel("x", self.x)
        _check_pixel("y", self.y)

    def offset(self, dx: int, dy: int) -> "Point":
        return Point(self.x + dx, self.y + dy)

    def as_list(self) -> list[int]:
        return [self.x, self.y]


@dataclass(frozen=True)
class BBox:
    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            _check_pixel(name, getattr(self, name))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise GeometryError(f"zero-area or inverted box: {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @classmethod
    def from_list(cls, v) -> "BBox":
        if len(v) != 4:
            raise GeometryError(f"bbox needs 4 values, got {v!r}")
        return cls(*v)

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class ScreenDims:
    width: int
    height: int

    def __post_init__(self):
        for name in ("width", "height"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise GeometryError(f"{name} must be a positive integer, got {v!r}")

    def contains_point(self, p: Point) -> bool:
        return p.x < self.width and p.y < self.height

    def contains_bbox(self, b: BBox) -> bool:
        return b.x_max <= self.width and b.y_max <= self.height


@dataclass(frozen=True)
class CropConfig:
    fraction: float = 0.25
    min_px: int = 200

    def __post_init__(self):
        if not (0.0 < self.fraction <= 1.0):
            raise GeometryError(f"crop fraction must be in (0, 1], got {self.fraction}")
        if self.min_px < 1:
            raise GeometryError("min_px must be >= 1")


@dataclass(frozen=True)
class CropWindow:
    """A sub-rectangle ``[origin, origin + dims)`` of a parent image."""

    origin: Point
    dims: ScreenDims
    parent: ScreenDims

    def __post_init__(self):
        if (
            self.origin.x + self.dims.width > self.parent.width
            or self.origin.y + self.dims.height > self.parent.height
        ):
            raise GeometryError(f"crop window {self} exceeds its parent image")

    def contains(self, p: Point) -> bool:
        return (
            self.origin.x <= p.x < self.origin.x + self.dims.width
            and self.origin.y <= p.y < self.origin.y + self.dims.height
        )


def _half_round_even(total: int) -> int:
    q, r = divmod(total, 2)
    if r and q % 2:
        q += 1
    return q


def bbox_center(b: BBox) -> Point:
    """Geometric center, each coordinate rounded half-to-even."""
    return Point(_half_round_even(b.x_min + b.x_max), _half_round_even(b.y_min + b.y_max))


def contains(b: BBox, p: Point) -> bool:
    return b.x_min <= p.x <= b.x_max and b.y_min <= p.y <= b.y_max


def _crop_side(full: int, fraction: float, min_px: int) -> int:
    return min(max(round(full * fraction), min_px), full)


def make_crop(center: Point, full: ScreenDims, cfg: CropConfig | None = None) -> CropWindow:
    """Window centered on ``center``, translated (never shrunk) to fit inside ``full``."""
    cfg = cfg or CropConfig()
    if not full.contains_point(center):
        raise OutOfWindow(f"crop center {center} outside image {full}")
    w = _crop_side(full.width, cfg.fraction, cfg.min_px)
    h = _crop_side(full.height, cfg.fraction, cfg.min_px)
    ox = min(max(center.x - w // 2, 0), full.width - w)
    oy = min(max(center.y - h // 2, 0), full.height - h)
    return CropWindow(Point(ox, oy), ScreenDims(w, h), full)


def to_crop_coords(w: CropWindow, p: Point) -> Point:
    if not w.contains(p):
        raise OutOfWindow(f"{p} is outside crop window at {w.origin} of size {w.dims}")
    return Point(p.x - w.origin.x, p.y - w.origin.y)


def from_crop_coords(w: CropWindow, p: Point) -> Point:
    if not (p.x < w.dims.width and p.y < w.dims.height):
        raise OutOfWindow(f"{p} is outside crop of size {w.dims}")
    return Point(p.x + w.origin.x, p.y + w.origin.y)


def translate_point(offset: Point, p: Point) -> Point:
    return Point(p.x + offset.x, p.y + offset.y)


def remap_bbox(offset: Point, b: BBox) -> BBox:
    return BBox(b.x_min + offset.x, b.y_min + offset.y, b.x_max + offset.x, b.y_max + offset.y)


def clip_bbox_to_window(b: BBox, w: CropWindow) -> BBox | None:
    """Intersection of ``b`` with the window, in window coordinates; None if empty."""
    x0 = max(b.x_min, w.origin.x)
    y0 = max(b.y_min, w.origin.y)
    x1 = min(b.x_max, w.origin.x + w.dims.width - 1)
    y1 = min(b.y_max, w.origin.y + w.dims.height - 1)
    if x0 >= x1 or y0 >= y1:
        return None
    return BBox(x0 - w.origin.x, y0 - w.origin.y, x1 - w.origin.x, y1 - w.origin.y)
