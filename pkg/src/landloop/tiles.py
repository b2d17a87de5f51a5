"""Web-Mercator XYZ tile math, sliding-window chip extraction, label/imagery
tile pyramids, and overlay compositing.

Tiles follow the slippy-map convention: 256px, origin top-left, y increasing
southward, {z}/{x}/{y}.png directory layout.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GeoTransform, LabelRaster, ValidationError, encode_label_raster
from .selection import DEFAULT_CELL_SIZE_DEG, cell_id_for
from .core import Chip

# Latitude cutoff of the square Web-Mercator world (atan(sinh(pi)), rounded).
MAX_MERCATOR_LAT = 85.05113

TILE_SIZE = 256


class RangeError(ValueError):
    """Coordinate or tile index outside its valid range."""


@dataclass(frozen=True)
class TileAddress:
    z: int
    x: int
    y: int

    def __post_init__(self):
        if self.z < 0:
            raise RangeError(f"zoom {self.z} must be >= 0")
        n = 1 << self.z
        if not (0 <= self.x < n and 0 <= self.y < n):
            raise RangeError(f"tile ({self.x},{self.y}) outside range for z={self.z}")


def _mercator_y_fraction(lat_deg: float) -> float:
    phi = math.radians(lat_deg)
    return (1.0 - math.log(math.tan(phi) + 1.0 / math.cos(phi)) / math.pi) / 2.0


def lonlat_to_tile(lon: float, lat: float, z: int) -> TileAddress:
    """Tile containing (lon, lat) at zoom z, clamped into range."""
    if not -180.0 <= lon <= 180.0:
        raise RangeError(f"longitude {lon} outside [-180, 180]")
    if abs(lat) > MAX_MERCATOR_LAT:
        raise RangeError(f"latitude {lat} beyond Web-Mercator limit")
    if z < 0:
        raise RangeError(f"zoom {z} must be >= 0")
    n = 1 << z
    x = math.floor((lon + 180.0) / 360.0 * n)
    y = math.floor(_mercator_y_fraction(lat) * n)
    return TileAddress(z, min(max(x, 0), n - 1), min(max(y, 0), n - 1))


def tile_bounds(t: TileAddress) -> tuple[float, float, float, float]:
    """Geographic bounds (lon_min, lat_min, lon_max, lat_max) of a tile."""
    n = 1 << t.z
    lon_min = t.x / n * 360.0 - 180.0
    lon_max = (t.x + 1) / n * 360.0 - 180.0
    lat_max = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * t.y / n))))
    lat_min = math.degrees(math.atan(math.sinh(math.pi * (1.0 - 2.0 * (t.y + 1) / n))))
    return (lon_min, lat_min, lon_max, lat_max)


def chip_raster(
    rgb: np.ndarray,
    geo: GeoTransform,
    chip_size: int = 1024,
    stride: int = 1024,
    cell_size_deg: float = DEFAULT_CELL_SIZE_DEG,
    id_prefix: str = "chip",
) -> list[Chip]:
    """Cut square windows from a large raster.

    Windows start at multiples of stride; one final window per axis is
    clamped so its far edge meets the raster edge, leaving no pixel
    unchipped and adding no padding.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 rgb raster, got {rgb.shape}")
    height, width = rgb.shape[:2]
    if chip_size > width or chip_size > height:
        raise ValidationError(
            f"chip size {chip_size} exceeds raster {width}x{height}"
        )
    if stride < 1:
        raise ValidationError("stride must be >= 1")

    def offsets(extent: int) -> list[int]:
        pos = list(range(0, extent - chip_size + 1, stride))
        if pos[-1] + chip_size < extent:
            pos.append(extent - chip_size)
        return pos

    chips = []
    for row in offsets(height):
        for col in offsets(width):
            chip_geo = geo.shifted(col, row)
            lon, lat = chip_geo.pixel_to_world(chip_size / 2.0, chip_size / 2.0)
            chips.append(
                Chip(
                    id=f"{id_prefix}_{col:06d}_{row:06d}",
                    rgb=rgb[row : row + chip_size, col : col + chip_size],
                    offset=(col, row),
                    geo=chip_geo,
                    cell_id=cell_id_for(lon, lat, cell_size_deg),
                )
            )
    return chips


def _footprint(geo: GeoTransform, width: int, height: int):
    lons = (geo.origin_lon, geo.origin_lon + width * geo.pixel_size_x)
    lats = (geo.origin_lat, geo.origin_lat + height * geo.pixel_size_y)
    return min(lons), min(lats), max(lons), max(lats)


def _tile_range(bounds, z: int):
    """Tiles intersecting the half-open footprint [min, max) on each axis."""
    lon_min, lat_min, lon_max, lat_max = bounds
    n = 1 << z

    def axis_range(f_min: float, f_max: float) -> tuple[int, int]:
        lo = math.floor(f_min * n)
        hi = math.ceil(f_max * n) - 1
        return max(lo, 0), min(hi, n - 1)

    x_lo, x_hi = axis_range((lon_min + 180.0) / 360.0, (lon_max + 180.0) / 360.0)
    y_lo, y_hi = axis_range(_mercator_y_fraction(lat_max), _mercator_y_fraction(lat_min))
    return x_lo, x_hi, y_lo, y_hi


def _tile_pixel_lonlat(t: TileAddress, tile_size: int):
    """Lon of each pixel column and lat of each pixel row (pixel centers)."""
    n = 1 << t.z
    frac = (np.arange(tile_size, dtype=np.float64) + 0.5) / tile_size
    lon = (t.x + frac) / n * 360.0 - 180.0
    g = (t.y + frac) / n
    lat = np.degrees(np.arctan(np.sinh(np.pi * (1.0 - 2.0 * g))))
    return lon, lat


def _source_indices(geo: GeoTransform, lon: np.ndarray, lat: np.ndarray):
    cols = np.floor((lon - geo.origin_lon) / geo.pixel_size_x).astype(np.int64)
    rows = np.floor((lat - geo.origin_lat) / geo.pixel_size_y).astype(np.int64)
    return cols, rows


def build_pyramid(
    labels: LabelRaster,
    z_min: int,
    z_max: int,
    tile_size: int = TILE_SIZE,
) -> dict[TileAddress, bytes]:
    """Render a label raster into indexed-PNG XYZ tiles for each zoom in
    [z_min, z_max]; nearest-neighbor resampling, class 0 outside the
    footprint, tiles wholly outside the footprint omitted."""
    if labels.geo is None:
        raise ValidationError("label raster has no GeoTransform")
    if z_min > z_max or z_min < 0:
        raise ValidationError(f"invalid zoom range {z_min}..{z_max}")

    def render(t: TileAddress) -> bytes:
        lon, lat = _tile_pixel_lonlat(t, tile_size)
        cols, rows = _source_indices(labels.geo, lon, lat)
        valid_c = (cols >= 0) & (cols < labels.width)
        valid_r = (rows >= 0) & (rows < labels.height)
        tile = np.zeros((tile_size, tile_size), dtype=np.uint8)
        if valid_c.any() and valid_r.any():
            rr = rows[valid_r][:, None]
            cc = cols[valid_c][None, :]
            tile[np.ix_(valid_r, valid_c)] = labels.data[rr, cc]
        return encode_label_raster(LabelRaster(tile))

    return _render_pyramid(labels.geo, labels.width, labels.height, z_min, z_max, render)


def build_rgb_pyramid(
    rgb: np.ndarray,
    geo: GeoTransform,
    z_min: int,
    z_max: int,
    tile_size: int = TILE_SIZE,
) -> dict[TileAddress, bytes]:
    """Same traversal as build_pyramid for 3-channel imagery; pixels outside
    the footprint are black."""
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 rgb raster, got {rgb.shape}")
    if z_min > z_max or z_min < 0:
        raise ValidationError(f"invalid zoom range {z_min}..{z_max}")
    height, width = rgb.shape[:2]

    def render(t: TileAddress) -> bytes:
        lon, lat = _tile_pixel_lonlat(t, tile_size)
        cols, rows = _source_indices(geo, lon, lat)
        valid_c = (cols >= 0) & (cols < width)
        valid_r = (rows >= 0) & (rows < height)
        tile = np.zeros((tile_size, tile_size, 3), dtype=np.uint8)
        if valid_c.any() and valid_r.any():
            rr = rows[valid_r][:, None]
            cc = cols[valid_c][None, :]
            tile[np.ix_(valid_r, valid_c)] = rgb[rr, cc]
        out = io.BytesIO()
        Image.fromarray(tile, mode="RGB").save(out, format="PNG")
        return out.getvalue()

    return _render_pyramid(geo, width, height, z_min, z_max, render)


def _render_pyramid(geo, width, height, z_min, z_max, render):
    bounds = _footprint(geo, width, height)
    tiles: dict[TileAddress, bytes] = {}
    for z in range(z_min, z_max + 1):
        x_lo, x_hi, y_lo, y_hi = _tile_range(bounds, z)
        for x in range(x_lo, x_hi + 1):
            for y in range(y_lo, y_hi + 1):
                addr = TileAddress(z, x, y)
                tiles[addr] = render(addr)
    return tiles


def write_pyramid(tiles: dict[TileAddress, bytes], root: str | Path) -> int:
    """Write tiles to the {z}/{x}/{y}.png layout; returns the tile count."""
    root = Path(root)
    for addr, png in tiles.items():
        path = root / str(addr.z) / str(addr.x) / f"{addr.y}.png"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(png)
    return len(tiles)


def composite_overlay(base: np.ndarray, overlay: np.ndarray, opacity: float) -> np.ndarray:
    """Blend an overlay onto a base image: (1-opacity)*base + opacity*overlay."""
    base = np.asarray(base)
    overlay = np.asarray(overlay)
    if base.shape != overlay.shape:
        raise ValidationError(f"image shapes differ: {base.shape} vs {overlay.shape}")
    if not 0.0 <= opacity <= 1.0:
        raise ValidationError(f"opacity {opacity} outside [0, 1]")
    blended = (1.0 - opacity) * base.astype(np.float64) + opacity * overlay.astype(np.float64)
    return np.clip(np.rint(blended), 0, 255).astype(np.uint8)
