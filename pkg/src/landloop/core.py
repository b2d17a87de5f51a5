"""Domain types shared by every stage of the mapping pipeline.

Defines the 8-class land-cover taxonomy (plus index 0 = unlabeled/ignore),
the normative palette, label/probability raster containers, the geo
transform, and the two interchange codecs (indexed label PNG, OEMP
probability raster). All containers are immutable after construction and
safe to share between workers; the codecs are pure functions.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

# Class 0 is the unlabeled/ignore index; 1..8 are the mapped land-cover
# classes, in taxonomy order.
CLASS_NAMES = (
    "unlabeled",
    "bareland",
    "rangeland",
    "developed space",
    "road",
    "tree",
    "water",
    "agriculture land",
    "building",
)

# Normative palette, one RGB triple per class index 0..8. Injective by
# construction; decode_label_raster rejects files that disagree.
PALETTE = (
    (0, 0, 0),
    (128, 0, 0),
    (0, 255, 36),
    (148, 148, 148),
    (255, 255, 255),
    (34, 97, 38),
    (0, 69, 255),
    (75, 181, 73),
    (222, 31, 7),
)

NUM_CLASSES = 8  # mapped classes; valid label indices are 0..NUM_CLASSES
IGNORE_INDEX = 0

_OEMP_MAGIC = b"OEMP"
_OEMP_VERSION = 1
_OEMP_HEADER = struct.Struct("<4sHIIB3x")


class ValidationError(ValueError):
    """A domain invariant was violated at construction time."""


class FormatError(ValueError):
    """A byte stream is not a valid encoding (bad magic, truncation, header mismatch)."""


class PaletteError(FormatError):
    """An indexed PNG carries a palette that differs from the normative palette."""


class NormalizationError(ValueError):
    """Per-pixel class probabilities do not sum to 1 within tolerance."""


def class_name(index: int) -> str:
    if not 0 <= index <= NUM_CLASSES:
        raise ValidationError(f"class index {index} outside 0..{NUM_CLASSES}")
    return CLASS_NAMES[index]


def class_color(index: int) -> tuple[int, int, int]:
    if not 0 <= index <= NUM_CLASSES:
        raise ValidationError(f"class index {index} outside 0..{NUM_CLASSES}")
    return PALETTE[index]


@dataclass(frozen=True)
class GeoTransform:
    """Affine raster-to-world mapping: lon = origin_lon + col*pixel_size_x,
    lat = origin_lat + row*pixel_size_y (pixel_size_y negative for north-up)."""

    origin_lon: float
    origin_lat: float
    pixel_size_x: float
    pixel_size_y: float

    def __post_init__(self):
        if self.pixel_size_x <= 0:
            raise ValidationError("pixel_size_x must be > 0")
        if self.pixel_size_y == 0:
            raise ValidationError("pixel_size_y must be nonzero")

    def pixel_to_world(self, col: float, row: float) -> tuple[float, float]:
        return (
            self.origin_lon + col * self.pixel_size_x,
            self.origin_lat + row * self.pixel_size_y,
        )

    def world_to_pixel(self, lon: float, lat: float) -> tuple[float, float]:
        return (
            (lon - self.origin_lon) / self.pixel_size_x,
            (lat - self.origin_lat) / self.pixel_size_y,
        )

    def pixel_center(self, col: int, row: int) -> tuple[float, float]:
        return self.pixel_to_world(col + 0.5, row + 0.5)

    def shifted(self, col: int, row: int) -> "GeoTransform":
        """Transform for a window whose (0,0) sits at (col,row) of this raster."""
        lon, lat = self.pixel_to_world(col, row)
        return GeoTransform(lon, lat, self.pixel_size_x, self.pixel_size_y)


@dataclass(frozen=True)
class LabelRaster:
    """Per-pixel class-index grid, row-major, origin top-left."""

    data: np.ndarray  # uint8, shape (height, width)
    geo: GeoTransform | None = None

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ValidationError(f"label data must be 2-D, got shape {arr.shape}")
        if arr.size and int(arr.max()) > NUM_CLASSES:
            raise ValidationError(
                f"label raster contains class index {int(arr.max())} > {NUM_CLASSES}"
            )
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ProbRaster:
    """Per-pixel class probabilities for classes 1..k, stored as k
    class-major float32 planes of shape (height, width)."""

    data: np.ndarray  # float32, shape (k, height, width)
    geo: GeoTransform | None = None
    sum_tolerance: float = field(default=1e-5, repr=False)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 3:
            raise ValidationError(f"probability data must be 3-D, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr, dtype=np.float32)
        if arr.size:
            if float(arr.min()) < 0.0 or float(arr.max()) > 1.0:
                raise ValidationError("probabilities must lie in [0, 1]")
            sums = arr.sum(axis=0, dtype=np.float64)
            err = float(np.abs(sums - 1.0).max())
            if err > self.sum_tolerance:
                raise NormalizationError(
                    f"per-pixel probability sums deviate from 1 by {err:.3g} "
                    f"(tolerance {self.sum_tolerance:.3g})"
                )
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def k(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Chip:
    """A square window cut from a parent raster, the unit of inference,
    scoring and annotation."""

    id: str
    rgb: np.ndarray  # uint8, shape (size, size, 3)
    offset: tuple[int, int]  # (col, row) within the parent raster
    geo: GeoTransform
    cell_id: str

    def __post_init__(self):
        arr = np.asarray(self.rgb)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] != arr.shape[1]:
            raise ValidationError(f"chip rgb must be square HxWx3, got shape {arr.shape}")
        if arr.shape[0] <= 0:
            raise ValidationError("chip size must be positive")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "rgb", arr)

    @property
    def size(self) -> int:
        return self.rgb.shape[0]

    def center_lonlat(self) -> tuple[float, float]:
        return self.geo.pixel_to_world(self.size / 2.0, self.size / 2.0)


def encode_label_raster(raster: LabelRaster) -> bytes:
    """Encode a label raster as an 8-bit indexed PNG with the normative palette."""
    img = Image.fromarray(np.asarray(raster.data), mode="P")
    img.putpalette([v for rgb in PALETTE for v in rgb])
    out = io.BytesIO()
    img.save(out, format="PNG")
    return out.getvalue()


def decode_label_raster(data: bytes, geo: GeoTransform | None = None) -> LabelRaster:
    """Decode an indexed PNG back to a LabelRaster, rejecting foreign palettes."""
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"not a decodable PNG: {exc}") from exc
    if img.format != "PNG":
        raise FormatError(f"expected PNG input, got {img.format}")
    if img.mode != "P":
        raise FormatError(f"expected an indexed-color PNG, got mode {img.mode}")
    flat = img.getpalette() or []
    entries = [tuple(flat[i : i + 3]) for i in range(0, len(flat), 3)]
    for idx, entry in enumerate(entries):
        if idx <= NUM_CLASSES:
            if entry != PALETTE[idx]:
                raise PaletteError(
                    f"palette entry {idx} is {entry}, expected {PALETTE[idx]}"
                )
        elif entry != (0, 0, 0):
            raise PaletteError(f"unexpected palette entry {idx} = {entry}")
    arr = np.asarray(img, dtype=np.uint8)
    if arr.size and int(arr.max()) > NUM_CLASSES:
        raise FormatError(
            f"pixel index {int(arr.max())} exceeds class range 0..{NUM_CLASSES}"
        )
    return LabelRaster(arr, geo=geo)


def encode_prob_raster(probs: ProbRaster) -> bytes:
    """Encode a probability raster in the OEMP binary layout (little-endian)."""
    header = _OEMP_HEADER.pack(
        _OEMP_MAGIC, _OEMP_VERSION, probs.width, probs.height, probs.k
    )
    planes = np.ascontiguousarray(probs.data, dtype="<f4")
    return header + planes.tobytes()


def decode_prob_raster(data: bytes, geo: GeoTransform | None = None) -> ProbRaster:
    """Decode an OEMP byte stream; float32 payloads round-trip bit-exactly."""
    if len(data) < _OEMP_HEADER.size:
        raise FormatError("truncated OEMP stream: header incomplete")
    magic, version, width, height, k = _OEMP_HEADER.unpack_from(data)
    if magic != _OEMP_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_OEMP_MAGIC!r}")
    if version != _OEMP_VERSION:
        raise FormatError(f"unsupported OEMP version {version}")
    payload = data[_OEMP_HEADER.size :]
    expected = width * height * k * 4
    if len(payload) != expected:
        raise FormatError(
            f"payload holds {len(payload)} bytes, header implies {expected} "
            f"({width}x{height}, k={k})"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(k, height, width)
    # float32 storage loses precision relative to construction, hence the
    # looser decode tolerance.
    return ProbRaster(arr, geo=geo, sum_tolerance=1e-3)
