import json
import math

import numpy as np
import pytest

from landloop.core import GeoTransform, LabelRaster
from landloop.metrics import ShapeError, accumulate_confusion
from landloop.refeval import (
    METERS_PER_DEGREE,
    FootprintSet,
    GeometryError,
    Polygon,
    error_map_png,
    evaluate_binary,
    filter_min_area,
    parse_footprints,
    polygon_area_m2,
    rasterize_polygons,
)


def geojson(*geometries):
    return json.dumps(
        {
            "type": "FeatureCollection",
            "features": [
                {"type": "Feature", "geometry": g, "properties": {}} for g in geometries
            ],
        }
    )


def point_in_rings(xc, yc, rings):
    """Independent even-odd test with the documented crossing predicate."""
    crossings = 0
    for ring in rings:
        for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
            if (y1 <= yc < y2) or (y2 <= yc < y1):
                x_int = x1 + (yc - y1) / (y2 - y1) * (x2 - x1)
                if xc < x_int:
                    crossings += 1
    return crossings % 2 == 1


def brute_force_mask(fs, geo, width, height):
    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in fs.polygons:
        rings = [r for r in poly.rings() if abs(_shoelace(r)) > 0]
        if not rings:
            continue
        for row in range(height):
            yc = geo.origin_lat + (row + 0.5) * geo.pixel_size_y
            for col in range(width):
                xc = geo.origin_lon + (col + 0.5) * geo.pixel_size_x
                if point_in_rings(xc, yc, rings):
                    mask[row, col] = 1
    return mask


def _shoelace(ring):
    return sum(x1 * y2 - x2 * y1 for (x1, y1), (x2, y2) in zip(ring, ring[1:])) / 2.0


def star_polygon(rng, n_vertices, cx, cy, r_max):
    """Random simple polygon: star-shaped around its center."""
    angles = np.sort(rng.uniform(0, 2 * math.pi, size=n_vertices))
    radii = rng.uniform(0.2 * r_max, r_max, size=n_vertices)
    pts = [
        (cx + r * math.cos(a), cy + r * math.sin(a)) for a, r in zip(angles, radii)
    ]
    return tuple(pts + [pts[0]])


class TestParse:
    def test_unit_square(self):
        doc = geojson(
            {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]}
        )
        fs = parse_footprints(doc, "building")
        assert len(fs.polygons) == 1
        assert len(fs.polygons[0].outer) == 5
        assert fs.polygons[0].holes == ()

    def test_multipolygon_with_three_parts(self):
        square = [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]
        doc = geojson(
            {"type": "MultiPolygon", "coordinates": [square, square, square]}
        )
        fs = parse_footprints(doc, "agriculture")
        assert len(fs.polygons) == 3

    def test_linestring_is_unsupported_and_named(self):
        doc = geojson({"type": "LineString", "coordinates": [[0, 0], [1, 1]]})
        with pytest.raises(GeometryError, match="LineString"):
            parse_footprints(doc, "building")

    def test_malformed_document(self):
        with pytest.raises(GeometryError):
            parse_footprints(b"{not json", "building")

    def test_open_ring_rejected(self):
        doc = geojson({"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1]]]})
        with pytest.raises(GeometryError, match="closed"):
            parse_footprints(doc, "building")

    def test_empty_collection_allowed(self):
        fs = parse_footprints(geojson(), "building")
        assert fs.polygons == ()

    def test_bad_class_role(self):
        with pytest.raises(ValueError):
            FootprintSet((), "forest")


def square_m(side_m, lat0=0.0, lon0=0.0):
    """Axis-aligned square of side_m meters in lon/lat degrees."""
    dlat = side_m / METERS_PER_DEGREE
    dlon = side_m / (METERS_PER_DEGREE * math.cos(math.radians(lat0)))
    return Polygon(
        outer=(
            (lon0, lat0),
            (lon0 + dlon, lat0),
            (lon0 + dlon, lat0 + dlat),
            (lon0, lat0 + dlat),
            (lon0, lat0),
        )
    )


class TestMinArea:
    def test_zero_threshold_keeps_everything(self):
        fs = FootprintSet((square_m(10), square_m(30)), "agriculture")
        assert filter_min_area(fs, 0).polygons == fs.polygons

    def test_small_square_removed(self):
        area = polygon_area_m2(square_m(10))
        assert area == pytest.approx(100, rel=1e-3)
        fs = FootprintSet((square_m(10),), "agriculture")
        assert filter_min_area(fs, 200).polygons == ()

    def test_large_square_retained(self):
        area = polygon_area_m2(square_m(20))
        assert area == pytest.approx(400, rel=1e-3)
        fs = FootprintSet((square_m(20),), "agriculture")
        assert len(filter_min_area(fs, 200).polygons) == 1

    def test_hole_subtracts_area(self):
        outer = square_m(30)
        hole = square_m(10, lat0=5e-5, lon0=5e-5)
        poly = Polygon(outer=outer.outer, holes=(hole.outer,))
        assert polygon_area_m2(poly) == pytest.approx(900 - 100, rel=1e-3)

    def test_idempotent_and_monotone(self):
        fs = FootprintSet((square_m(10), square_m(20), square_m(40)), "building")
        once = filter_min_area(fs, 200)
        assert filter_min_area(once, 200).polygons == once.polygons
        higher = filter_min_area(fs, 500)
        assert set(higher.polygons) <= set(once.polygons)


class TestRasterize:
    def test_axis_aligned_square_covers_exact_pixels(self):
        # square over pixel centers of the 2x2 top-left block of a 4x4 grid
        geo = GeoTransform(0.0, 4.0, 1.0, -1.0)
        poly = Polygon(outer=((0, 4), (2, 4), (2, 2), (0, 2), (0, 4)))
        mask, skipped = rasterize_polygons(FootprintSet((poly,), "building"), geo, 4, 4)
        expected = np.zeros((4, 4), dtype=np.uint8)
        expected[0:2, 0:2] = 1
        assert (mask == expected).all()
        assert skipped == 0

    def test_right_triangle_matches_brute_force(self):
        geo = GeoTransform(0.0, 10.0, 1.0, -1.0)
        poly = Polygon(outer=((0, 0), (10, 0), (0, 10), (0, 0)))
        fs = FootprintSet((poly,), "building")
        mask, _ = rasterize_polygons(fs, geo, 10, 10)
        assert (mask == brute_force_mask(fs, geo, 10, 10)).all()
        assert mask.sum() == 45  # half the grid, diagonal excluded by centers

    def test_hole_interior_is_zero(self):
        geo = GeoTransform(0.0, 8.0, 1.0, -1.0)
        outer = ((0, 0), (8, 0), (8, 8), (0, 8), (0, 0))
        hole = ((2, 2), (6, 2), (6, 6), (2, 6), (2, 2))
        fs = FootprintSet((Polygon(outer=outer, holes=(hole,)),), "building")
        mask, _ = rasterize_polygons(fs, geo, 8, 8)
        assert mask[0, 0] == 1
        assert (mask[2:6, 2:6] == 0).all()

    def test_degenerate_ring_is_skipped_and_counted(self):
        geo = GeoTransform(0.0, 4.0, 1.0, -1.0)
        flat = Polygon(outer=((0, 0), (2, 0), (4, 0), (0, 0)))
        good = Polygon(outer=((0, 4), (2, 4), (2, 2), (0, 2), (0, 4)))
        mask, skipped = rasterize_polygons(FootprintSet((flat, good), "building"), geo, 4, 4)
        assert skipped == 1
        assert mask.sum() == 4

    def test_random_simple_polygons_match_brute_force(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            w = int(rng.integers(4, 33))
            h = int(rng.integers(4, 33))
            geo = GeoTransform(0.0, float(h), 1.0, -1.0)
            poly = Polygon(
                outer=star_polygon(rng, int(rng.integers(3, 12)), w / 2, h / 2, min(w, h) / 2)
            )
            fs = FootprintSet((poly,), "building")
            mask, _ = rasterize_polygons(fs, geo, w, h)
            assert (mask == brute_force_mask(fs, geo, w, h)).all()


class TestEvaluateBinary:
    def test_perfect_match(self):
        labels = LabelRaster(np.full((4, 4), 8, dtype=np.uint8))
        ref = np.ones((4, 4), dtype=np.uint8)
        result = evaluate_binary(labels, 8, ref)
        assert result.iou == 1.0 and result.oa == 1.0

    def test_all_positive_against_half_positive(self):
        labels = LabelRaster(np.full((2, 4), 8, dtype=np.uint8))
        ref = np.zeros((2, 4), dtype=np.uint8)
        ref[:, :2] = 1
        result = evaluate_binary(labels, 8, ref)
        assert result.iou == 0.5 and result.oa == 0.5

    def test_counts_match_confusion_accumulation(self):
        rng = np.random.default_rng(5)
        labels = LabelRaster(rng.integers(0, 9, size=(16, 16), dtype=np.uint8))
        ref = rng.integers(0, 2, size=(16, 16)).astype(np.uint8)
        result = evaluate_binary(labels, 8, ref)
        pred01 = LabelRaster((labels.data == 8).astype(np.uint8))
        truth01 = LabelRaster(ref)
        cm = accumulate_confusion(pred01, truth01, ignore_index=None, num_classes=2)
        assert result.tp == cm.counts[1, 1]
        assert result.tn == cm.counts[0, 0]
        assert result.fp == cm.counts[0, 1]
        assert result.fn == cm.counts[1, 0]

    def test_error_png_has_bit_exact_colors(self):
        import io

        from PIL import Image

        labels = LabelRaster(np.array([[8, 8], [0, 0]], dtype=np.uint8))
        ref = np.array([[1, 0], [1, 0]], dtype=np.uint8)
        result = evaluate_binary(labels, 8, ref)
        arr = np.asarray(Image.open(io.BytesIO(error_map_png(result.error))))
        assert tuple(arr[0, 0]) == (255, 255, 255)  # TP
        assert tuple(arr[0, 1]) == (255, 0, 0)  # FP
        assert tuple(arr[1, 0]) == (0, 255, 0)  # FN
        assert tuple(arr[1, 1]) == (0, 0, 0)  # TN

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            evaluate_binary(
                LabelRaster(np.zeros((2, 2), dtype=np.uint8)), 8, np.zeros((3, 3))
            )
