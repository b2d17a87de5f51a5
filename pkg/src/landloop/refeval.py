"""Reference-footprint evaluation: polygon ingestion, minimum-area
filtering, scanline rasterization, and binary IoU/OA with error maps.

Inclusion rule: a pixel is set when its center lies inside an outer ring
and outside that polygon's holes, by even-odd crossing counting with the
half-open edge rule (y1 <= y < y2 or y2 <= y < y1) and intersection
x = x1 + (y - y1)/(y2 - y1) * (x2 - x1), counting crossings strictly right
of the center.
"""

from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .core import GeoTransform, LabelRaster, ValidationError
from .metrics import ErrorRaster, ShapeError, error_map

CLASS_ROLES = ("building", "agriculture")

# Local equirectangular scale; error < 0.5% below 60 degrees latitude,
# adequate at footprint scale.
METERS_PER_DEGREE = 111320.0


class GeometryError(ValueError):
    """Malformed or unsupported footprint geometry."""


@dataclass(frozen=True)
class Polygon:
    outer: tuple[tuple[float, float], ...]
    holes: tuple[tuple[tuple[float, float], ...], ...] = ()

    def __post_init__(self):
        for ring in (self.outer, *self.holes):
            _check_ring(ring)

    def rings(self):
        return (self.outer, *self.holes)


def _check_ring(ring) -> None:
    if len(ring) < 4:
        raise GeometryError(f"ring has {len(ring)} vertices, need >= 4")
    if ring[0] != ring[-1]:
        raise GeometryError("ring is not closed (first vertex != last)")
    for lon, lat in ring:
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise GeometryError("ring contains non-finite coordinates")


@dataclass(frozen=True)
class FootprintSet:
    polygons: tuple[Polygon, ...]
    class_role: str

    def __post_init__(self):
        if self.class_role not in CLASS_ROLES:
            raise ValidationError(f"class_role must be one of {CLASS_ROLES}")


def _rings_from_coords(coords) -> Polygon:
    rings = [tuple((float(lon), float(lat)) for lon, lat in ring) for ring in coords]
    if not rings:
        raise GeometryError("polygon without rings")
    return Polygon(outer=rings[0], holes=tuple(rings[1:]))


def parse_footprints(doc: bytes | str, class_role: str) -> FootprintSet:
    """Extract all polygons from a GeoJSON subset (Polygon / MultiPolygon
    features; FeatureCollection, single Feature, or bare geometry)."""
    try:
        obj = json.loads(doc)
    except json.JSONDecodeError as exc:
        raise GeometryError(f"malformed GeoJSON document: {exc}") from exc

    def geometries(node):
        kind = node.get("type")
        if kind == "FeatureCollection":
            for feat in node.get("features", []):
                yield from geometries(feat)
        elif kind == "Feature":
            geom = node.get("geometry")
            if geom is None:
                raise GeometryError("feature without geometry")
            yield from geometries(geom)
        elif kind in ("Polygon", "MultiPolygon"):
            yield node
        else:
            raise GeometryError(f"unsupported geometry type {kind!r}")

    polygons: list[Polygon] = []
    if not isinstance(obj, dict):
        raise GeometryError("GeoJSON root must be an object")
    for geom in geometries(obj):
        coords = geom.get("coordinates", [])
        if geom["type"] == "Polygon":
            polygons.append(_rings_from_coords(coords))
        else:
            for part in coords:
                polygons.append(_rings_from_coords(part))
    return FootprintSet(tuple(polygons), class_role)


def _shoelace(ring) -> float:
    area = 0.0
    for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
        area += x1 * y2 - x2 * y1
    return area / 2.0


def polygon_area_m2(poly: Polygon) -> float:
    """Planar area in square meters: shoelace on a local equirectangular
    projection centered at the outer ring's mean latitude; holes subtract."""
    lat0 = sum(lat for _, lat in poly.outer[:-1]) / (len(poly.outer) - 1)
    sx = METERS_PER_DEGREE * math.cos(math.radians(lat0))
    sy = METERS_PER_DEGREE

    def project(ring):
        return [(lon * sx, lat * sy) for lon, lat in ring]

    area = abs(_shoelace(project(poly.outer)))
    for hole in poly.holes:
        area -= abs(_shoelace(project(hole)))
    return max(area, 0.0)


def filter_min_area(fs: FootprintSet, min_area: float) -> FootprintSet:
    """Drop polygons smaller than min_area square meters."""
    if min_area < 0:
        raise ValidationError("min_area must be >= 0")
    kept = tuple(p for p in fs.polygons if polygon_area_m2(p) >= min_area)
    return FootprintSet(kept, fs.class_role)


def rasterize_polygons(
    fs: FootprintSet, geo: GeoTransform, width: int, height: int
) -> tuple[np.ndarray, int]:
    """Scanline fill of all polygons onto a binary mask.

    Returns (mask, skipped) where skipped counts degenerate zero-area rings
    that were ignored.
    """
    mask = np.zeros((height, width), dtype=np.uint8)
    skipped = 0
    centers_x = geo.origin_lon + (np.arange(width, dtype=np.float64) + 0.5) * geo.pixel_size_x
    for poly in fs.polygons:
        edges = []
        for ring in poly.rings():
            if _shoelace(ring) == 0.0:
                skipped += 1
                continue
            edges.extend(zip(ring, ring[1:]))
        if not edges:
            continue
        for row in range(height):
            yc = geo.origin_lat + (row + 0.5) * geo.pixel_size_y
            xs = []
            for (x1, y1), (x2, y2) in edges:
                if (y1 <= yc < y2) or (y2 <= yc < y1):
                    xs.append(x1 + (yc - y1) / (y2 - y1) * (x2 - x1))
            if not xs:
                continue
            xs.sort()
            right = len(xs) - np.searchsorted(xs, centers_x, side="right")
            mask[row] |= (right % 2 == 1).astype(np.uint8)
    return mask, skipped


@dataclass(frozen=True)
class BinaryEval:
    iou: float | None
    oa: float | None
    tp: int
    tn: int
    fp: int
    fn: int
    error: ErrorRaster

    def to_dict(self) -> dict:
        return {
            "iou": self.iou,
            "oa": self.oa,
            "tp": self.tp,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
        }


def evaluate_binary(
    pred_labels: LabelRaster, target_class: int, ref_mask: np.ndarray
) -> BinaryEval:
    """Binary IoU/OA of one predicted class against a reference mask, with a
    TP/TN/FP/FN error raster."""
    ref = np.asarray(ref_mask).astype(bool)
    if pred_labels.data.shape != ref.shape:
        raise ShapeError(
            f"prediction {pred_labels.data.shape} vs reference {ref.shape}"
        )
    pred = pred_labels.data == target_class
    tp = int((pred & ref).sum())
    tn = int((~pred & ~ref).sum())
    fp = int((pred & ~ref).sum())
    fn = int((~pred & ref).sum())
    union = tp + fp + fn
    total = tp + tn + fp + fn
    return BinaryEval(
        iou=tp / union if union else None,
        oa=(tp + tn) / total if total else None,
        tp=tp,
        tn=tn,
        fp=fp,
        fn=fn,
        error=error_map(pred, ref),
    )


def error_map_png(err: ErrorRaster) -> bytes:
    """Render an error raster to a PNG with the bit-exact white/black/red/green colors."""
    out = io.BytesIO()
    Image.fromarray(err.to_rgb(), mode="RGB").save(out, format="PNG")
    return out.getvalue()
