import random

import pytest

from refdial.coords import (
    BBox,
    ImageSize,
    InvalidGeometryError,
    InvertedBoxError,
    OutOfBoundsError,
    Point,
    PrecisionError,
    box_spans,
    denormalize_box,
    denormalize_point,
    normalize_box,
    normalize_point,
    parse_regions,
    point_spans,
    serialize_box,
    serialize_point,
    validate_box,
)

# The worked reply sentence the coordinate grammar has to reproduce exactly.
REPLY = (
    "The jacket [0.268, 0.372] is green. We can find a T-shirt [0.653, 0.532] "
    "and cropped pants [0.569, 0.101] a with same green color. So the answer is two."
)


class TestTypes:
    def test_point_bounds(self):
        Point(0.0, 1.0)
        with pytest.raises(InvalidGeometryError):
            Point(-0.1, 0.5)
        with pytest.raises(InvalidGeometryError):
            Point(0.5, 1.0001)

    def test_bbox_invariants(self):
        b = BBox(0.1, 0.2, 0.4, 0.6)
        assert b.width == pytest.approx(0.3)
        assert not b.is_degenerate
        assert BBox(0.5, 0.5, 0.5, 0.9).is_degenerate
        with pytest.raises(InvalidGeometryError):
            BBox(0.4, 0.4, 0.2, 0.9)

    def test_image_size(self):
        with pytest.raises(InvalidGeometryError):
            ImageSize(0, 100)

    def test_center(self):
        c = BBox(0.2, 0.2, 0.4, 0.8).center()
        assert c.coords() == pytest.approx((0.3, 0.5))


class TestNormalize:
    def test_full_image_identity(self):
        assert normalize_box((0, 0, 640, 480), ImageSize(640, 480)) == BBox(0, 0, 1, 1)

    def test_exact_quarters(self):
        got = normalize_box((160, 120, 480, 360), ImageSize(640, 480))
        assert got == BBox(0.25, 0.25, 0.75, 0.75)

    def test_manual_division(self):
        # oracle: plain division by hand, 123/1000 etc.
        got = normalize_box((123, 45, 456, 78), ImageSize(1000, 1000))
        assert got == BBox(0.123, 0.045, 0.456, 0.078)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBoundsError):
            normalize_box((0, 0, 641, 480), ImageSize(640, 480))

    def test_inverted(self):
        with pytest.raises(InvertedBoxError):
            normalize_box((100, 0, 50, 480), ImageSize(640, 480))

    def test_denormalize(self):
        assert denormalize_box(BBox(0, 0, 1, 1), ImageSize(640, 480)) == (0, 0, 640, 480)
        assert denormalize_box(BBox(0.5, 0.5, 0.5, 0.5), ImageSize(100, 100)) == (
            50,
            50,
            50,
            50,
        )
        got = denormalize_box(BBox(0.123, 0.045, 0.456, 0.078), ImageSize(1000, 1000))
        assert got == pytest.approx((123, 45, 456, 78), abs=1e-9)

    def test_pixel_round_trip(self):
        rng = random.Random(11)
        for _ in range(500):
            w, h = rng.randint(1, 4000), rng.randint(1, 4000)
            x0 = rng.uniform(0, w)
            x1 = rng.uniform(x0, w)
            y0 = rng.uniform(0, h)
            y1 = rng.uniform(y0, h)
            size = ImageSize(w, h)
            back = denormalize_box(normalize_box((x0, y0, x1, y1), size), size)
            for a, b in zip(back, (x0, y0, x1, y1)):
                assert abs(a - b) <= 0.5

    def test_point_helpers(self):
        p = normalize_point((320, 240), ImageSize(640, 480))
        assert p == Point(0.5, 0.5)
        assert denormalize_point(p, ImageSize(640, 480)) == (320, 240)


class TestSerialize:
    def test_paper_example(self):
        assert serialize_point(Point(0.268, 0.372), 3) == "[0.268, 0.372]"

    def test_zero(self):
        assert serialize_point(Point(0, 0), 3) == "[0.000, 0.000]"

    def test_rounding(self):
        # oracle: decimal rounding by hand
        assert serialize_point(Point(0.12345, 0.99999), 3) == "[0.123, 1.000]"

    def test_half_away_from_zero(self):
        assert serialize_point(Point(0.1235, 0.0005), 3) == "[0.124, 0.001]"

    def test_box_trivial(self):
        assert serialize_box(BBox(0, 0, 1, 1), 3) == "[0.000, 0.000, 1.000, 1.000]"
        assert serialize_box(BBox(0.25, 0.25, 0.75, 0.75), 2) == "[0.25, 0.25, 0.75, 0.75]"

    def test_box_rounding(self):
        # oracle: decimal rounding by hand
        got = serialize_box(BBox(0.1234, 0.5678, 0.9, 0.95), 3)
        assert got == "[0.123, 0.568, 0.900, 0.950]"

    def test_bad_precision(self):
        with pytest.raises(PrecisionError):
            serialize_point(Point(0.5, 0.5), 0)
        with pytest.raises(PrecisionError):
            serialize_box(BBox(0, 0, 1, 1), 10)


class TestParse:
    def test_paper_reply(self):
        spans = parse_regions(REPLY)
        pts = point_spans(spans)
        assert len(spans) == 3 and len(pts) == 3
        assert [s.geometry.coords() for s in pts] == [
            (0.268, 0.372),
            (0.653, 0.532),
            (0.569, 0.101),
        ]

    def test_no_coordinates(self):
        assert parse_regions("no coordinates here") == []

    def test_malformed(self):
        # oracle: arity/range rule table
        spans = parse_regions("[0.1,0.2,0.3] and [1.5, 0.2]")
        assert len(spans) == 2
        assert all(not s.ok for s in spans)
        assert "3 numbers" in spans[0].error
        assert "outside [0, 1]" in spans[1].error

    def test_inverted_box_is_malformed(self):
        (span,) = parse_regions("[0.4, 0.4, 0.2, 0.9]")
        assert span.kind == "malformed" and "inverted" in span.error

    def test_whitespace_tolerant(self):
        (span,) = parse_regions("see [ 0.25 ,\t0.75 ]")
        assert span.geometry == Point(0.25, 0.75)

    def test_offsets_are_bytes(self):
        text = "café [0.5, 0.5]"
        (span,) = parse_regions(text)
        raw = text.encode("utf-8")
        assert raw[span.byte_start : span.byte_end].decode("ascii") == span.raw_text
        assert span.byte_start == len("café ".encode("utf-8"))

    def test_position_independence(self):
        prefix = "nothing to see à here. "
        base = parse_regions(REPLY)
        shifted = parse_regions(prefix + REPLY)
        delta = len(prefix.encode("utf-8"))
        assert len(base) == len(shifted)
        for a, b in zip(base, shifted):
            assert b.byte_start == a.byte_start + delta
            assert b.byte_end == a.byte_end + delta
            assert b.raw_text == a.raw_text and b.geometry == a.geometry

    def test_box_span_helper(self):
        spans = parse_regions("[0.1, 0.1] then [0.1, 0.1, 0.9, 0.9]")
        assert len(box_spans(spans)) == 1
        assert box_spans(spans)[0].geometry == BBox(0.1, 0.1, 0.9, 0.9)


class TestRoundTrip:
    @pytest.mark.parametrize("decimals", [1, 2, 3, 4, 5, 6])
    def test_fuzz_round_trip(self, decimals):
        rng = random.Random(1000 + decimals)
        tol = 0.5 * 10.0**-decimals + 1e-12  # tiny float-compare guard
        for _ in range(2000):
            if rng.random() < 0.5:
                g = Point(rng.random(), rng.random())
                text = serialize_point(g, decimals)
            else:
                x0, x1 = sorted((rng.random(), rng.random()))
                y0, y1 = sorted((rng.random(), rng.random()))
                g = BBox(x0, y0, x1, y1)
                text = serialize_box(g, decimals)
            (span,) = parse_regions("pad " + text + " pad")
            assert span.ok
            got = span.geometry.coords() if isinstance(g, BBox) else span.geometry.coords()
            want = g.coords()
            assert type(span.geometry) is type(g)
            for a, b in zip(got, want):
                assert abs(a - b) <= tol

    def test_serialize_idempotent(self):
        rng = random.Random(5)
        for _ in range(300):
            p = Point(rng.random(), rng.random())
            text = serialize_point(p, 3)
            (span,) = parse_regions(text)
            assert serialize_point(span.geometry, 3) == text

    def test_raw_text_reconstructs(self):
        text = "a [0.1, 0.2] b [0.3, 0.4, 0.5, 0.6] c [7, 8, 9]"
        raw = text.encode("utf-8")
        for span in parse_regions(text):
            assert raw[span.byte_start : span.byte_end].decode("ascii") == span.raw_text


class TestValidateBox:
    def test_rule_table(self):
        assert validate_box((0.1, 0.1, 0.3, 0.3)) == "ok"
        assert validate_box((0.5, 0.5, 0.5, 0.9)) == "degenerate"
        assert validate_box((0.4, 0.4, 0.2, 0.9)) == "invalid"
        assert validate_box((0.0, 0.0, 1.5, 1.0)) == "invalid"
