"""refdial: referential-dialogue data and evaluation toolkit."""

__version__ = "0.1.0"

from .coords import (  # noqa: F401
    BBox,
    ImageSize,
    Point,
    RegionSpan,
    denormalize_box,
    normalize_box,
    parse_regions,
    serialize_box,
    serialize_point,
    validate_box,
)
