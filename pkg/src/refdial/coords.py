"""Normalized coordinates embedded in natural-language text.

Points are written as ``[x, y]`` and boxes as ``[x_min, y_min, x_max, y_max]``,
with every number normalized to the image size and printed to a fixed number
of decimal places (3 by default). The serializer and the parser in this module
define the canonical text form used by the dataset builder, the evaluation
harness, and the service API.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from math import isfinite
from typing import Literal, Sequence

DEFAULT_DECIMALS = 3

BoxValidity = Literal["ok", "degenerate", "invalid"]


class CoordError(ValueError):
    """Base class for coordinate-grammar errors."""


class InvalidGeometryError(CoordError):
    pass


class OutOfBoundsError(CoordError):
    pass


class InvertedBoxError(CoordError):
    pass


class PrecisionError(CoordError):
    pass


@dataclass(frozen=True)
class Point:
    """Region center point in normalized [0, 1] image coordinates."""

    x: float
    y: float

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y)):
            if not (isfinite(v) and 0.0 <= v <= 1.0):
                raise InvalidGeometryError(f"point {name}={v!r} outside [0, 1]")

    def coords(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in normalized [0, 1] image coordinates.

    Zero-area boxes are allowed (point-like source annotations exist); they
    are flagged by :attr:`is_degenerate` and score IoU 0 against everything.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name, v in zip(("x_min", "y_min", "x_max", "y_max"), self.coords()):
            if not (isfinite(v) and 0.0 <= v <= 1.0):
                raise InvalidGeometryError(f"box {name}={v!r} outside [0, 1]")
        if self.x_min > self.x_max:
            raise InvalidGeometryError(f"box x_min {self.x_min!r} > x_max {self.x_max!r}")
        if self.y_min > self.y_max:
            raise InvalidGeometryError(f"box y_min {self.y_min!r} > y_max {self.y_max!r}")

    def coords(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def is_degenerate(self) -> bool:
        return self.area == 0.0

    def center(self) -> Point:
        return Point((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


@dataclass(frozen=True)
class ImageSize:
    """Pixel dimensions of the source image."""

    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise InvalidGeometryError(
                f"image size {self.width}x{self.height} must be at least 1x1"
            )


@dataclass(frozen=True)
class RegionSpan:
    """One bracketed coordinate group located inside a piece of text.

    Offsets are byte offsets into the UTF-8 encoding of the source text, so
    they stay meaningful for non-ASCII prose around the coordinates. Malformed
    groups (wrong arity, out-of-range values, inverted boxes) are returned
    with ``geometry=None`` and a diagnostic instead of being dropped.
    """

    byte_start: int
    byte_end: int
    raw_text: str
    geometry: Point | BBox | None
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.geometry is not None

    @property
    def kind(self) -> str:
        if isinstance(self.geometry, Point):
            return "point"
        if isinstance(self.geometry, BBox):
            return "box"
        return "malformed"


def check_decimals(decimals: int) -> int:
    if not isinstance(decimals, int) or not 1 <= decimals <= 9:
        raise PrecisionError(f"decimals must be an integer in 1..9, got {decimals!r}")
    return decimals


_QUANTA = {d: Decimal(1).scaleb(-d) for d in range(1, 10)}


def _format_coord(value: float, decimals: int) -> str:
    # Half-away-from-zero on the shortest round-trip decimal form of the
    # float, so every IEEE-754 host prints the same bytes.
    q = Decimal(repr(float(value))).quantize(_QUANTA[decimals], rounding=ROUND_HALF_UP)
    return format(q, "f")


def serialize_point(point: Point, decimals: int = DEFAULT_DECIMALS) -> str:
    """Render a point as ``[x, y]`` with exactly ``decimals`` digits each."""
    check_decimals(decimals)
    return f"[{_format_coord(point.x, decimals)}, {_format_coord(point.y, decimals)}]"


def serialize_box(box: BBox, decimals: int = DEFAULT_DECIMALS) -> str:
    """Render a box as ``[x_min, y_min, x_max, y_max]`` at fixed precision."""
    check_decimals(decimals)
    return "[" + ", ".join(_format_coord(v, decimals) for v in box.coords()) + "]"


_NUMBER = rb"-?(?:\d+(?:\.\d+)?|\.\d+)"
_GROUP_RE = re.compile(rb"\[\s*" + _NUMBER + rb"(?:\s*,\s*" + _NUMBER + rb")*\s*\]")
_NUMBER_RE = re.compile(_NUMBER)


def _classify(values: list[float]) -> tuple[Point | BBox | None, str | None]:
    for v in values:
        if not 0.0 <= v <= 1.0:
            return None, f"value {v!r} outside [0, 1]"
    if len(values) == 2:
        return Point(values[0], values[1]), None
    if len(values) == 4:
        x0, y0, x1, y1 = values
        if x0 > x1 or y0 > y1:
            return None, f"inverted box [{x0!r}, {y0!r}, {x1!r}, {y1!r}]"
        return BBox(x0, y0, x1, y1), None
    return None, f"group has {len(values)} numbers, expected 2 or 4"


def parse_regions(text: str) -> list[RegionSpan]:
    """Find every bracketed numeric group in ``text``, in byte order.

    Groups of 2 in-range numbers parse to a :class:`Point`, groups of 4 to a
    :class:`BBox`; anything else bracketed-and-numeric comes back as a
    malformed span with a diagnostic. Never raises on the input text.
    """
    raw = text.encode("utf-8")
    spans: list[RegionSpan] = []
    for m in _GROUP_RE.finditer(raw):
        matched = m.group(0)
        values = [float(n) for n in _NUMBER_RE.findall(matched)]
        geometry, error = _classify(values)
        spans.append(
            RegionSpan(
                byte_start=m.start(),
                byte_end=m.end(),
                raw_text=matched.decode("ascii"),
                geometry=geometry,
                error=error,
            )
        )
    return spans


def point_spans(spans: Sequence[RegionSpan]) -> list[RegionSpan]:
    return [s for s in spans if isinstance(s.geometry, Point)]


def box_spans(spans: Sequence[RegionSpan]) -> list[RegionSpan]:
    return [s for s in spans if isinstance(s.geometry, BBox)]


def first_box(spans: Sequence[RegionSpan]) -> BBox | None:
    for s in spans:
        if isinstance(s.geometry, BBox):
            return s.geometry
    return None


def normalize_box(pixel_box: Sequence[float], size: ImageSize) -> BBox:
    """Divide pixel coordinates by the image dimensions.

    Raises OutOfBoundsError when a coordinate leaves the image extent and
    InvertedBoxError when min > max on either axis.
    """
    x0, y0, x1, y1 = pixel_box
    for name, v, limit in (
        ("x_min", x0, size.width),
        ("y_min", y0, size.height),
        ("x_max", x1, size.width),
        ("y_max", y1, size.height),
    ):
        if not (isfinite(float(v)) and 0 <= v <= limit):
            raise OutOfBoundsError(f"{name}={v!r} outside image extent 0..{limit}")
    if x0 > x1 or y0 > y1:
        raise InvertedBoxError(f"pixel box {tuple(pixel_box)!r} has min > max")
    return BBox(x0 / size.width, y0 / size.height, x1 / size.width, y1 / size.height)


def denormalize_box(box: BBox, size: ImageSize) -> tuple[float, float, float, float]:
    """Multiply a normalized box back into pixel coordinates."""
    return (
        box.x_min * size.width,
        box.y_min * size.height,
        box.x_max * size.width,
        box.y_max * size.height,
    )


def normalize_point(pixel_point: Sequence[float], size: ImageSize) -> Point:
    x, y = pixel_point
    for name, v, limit in (("x", x, size.width), ("y", y, size.height)):
        if not (isfinite(float(v)) and 0 <= v <= limit):
            raise OutOfBoundsError(f"{name}={v!r} outside image extent 0..{limit}")
    return Point(x / size.width, y / size.height)


def denormalize_point(point: Point, size: ImageSize) -> tuple[float, float]:
    return (point.x * size.width, point.y * size.height)


def validate_box(values: Sequence[float]) -> BoxValidity:
    """Classify four raw numbers as an ok, degenerate, or invalid box."""
    if len(values) != 4:
        return "invalid"
    for v in values:
        if not (isfinite(float(v)) and 0.0 <= v <= 1.0):
            return "invalid"
    x0, y0, x1, y1 = values
    if x0 > x1 or y0 > y1:
        return "invalid"
    if (x1 - x0) * (y1 - y0) == 0.0:
        return "degenerate"
    return "ok"
