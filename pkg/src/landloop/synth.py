"""Deterministic synthetic-scene generator for desk-scale runs.

Scenes are stacks of colored geometric primitives with exact ground truth.
A chip may carry a photometric seam: everything on the far side of the
seam gets a per-channel gain/bias shift, the desk-scale analog of mosaics
stitched from imagery taken at different dates. Clean scenes are separable
by the baseline classifier; seam-shifted scenes are not, until their
annotations enter the training set.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .core import (
    Chip,
    GeoTransform,
    LabelRaster,
    ValidationError,
    decode_label_raster,
    encode_label_raster,
)
from .selection import cell_id_for

# Synthetic color distribution per class: (mean RGB, jitter sigma). Chosen
# so clean clusters and their gain/bias-shifted images stay apart in color
# space.
CLASS_COLORS = {
    1: ((181, 146, 105), 6.0),  # bareland
    2: ((110, 190, 80), 8.0),  # rangeland
    3: ((150, 150, 150), 6.0),  # developed space
    4: ((70, 70, 75), 5.0),  # road
    5: ((30, 100, 40), 9.0),  # tree
    6: ((40, 70, 160), 6.0),  # water
    7: ((200, 190, 60), 8.0),  # agriculture land
    8: ((190, 60, 50), 7.0),  # building
}

TAG_CLEAN = "clean"
TAG_SHIFTED = "shifted"


@dataclass(frozen=True)
class Primitive:
    """One painted region: rect (x0, y0, w, h), strip (axis, start,
    thickness), or blob (cx, cy, radius)."""

    kind: str
    class_index: int
    mean_rgb: tuple[float, float, float]
    jitter: float
    geometry: tuple

    def __post_init__(self):
        if self.kind not in ("rect", "strip", "blob"):
            raise ValidationError(f"unknown primitive kind {self.kind!r}")
        if self.jitter < 0:
            raise ValidationError("jitter must be >= 0")

    def mask(self, size: int) -> np.ndarray:
        m = np.zeros((size, size), dtype=bool)
        if self.kind == "rect":
            x0, y0, w, h = self.geometry
            if x0 < 0 or y0 < 0 or x0 + w > size or y0 + h > size or w <= 0 or h <= 0:
                raise ValidationError(f"rect {self.geometry} outside {size}x{size}")
            m[y0 : y0 + h, x0 : x0 + w] = True
        elif self.kind == "strip":
            axis, start, thickness = self.geometry
            if start < 0 or thickness <= 0 or start + thickness > size:
                raise ValidationError(f"strip {self.geometry} outside {size}x{size}")
            if axis == "h":
                m[start : start + thickness, :] = True
            elif axis == "v":
                m[:, start : start + thickness] = True
            else:
                raise ValidationError(f"strip axis must be 'h' or 'v', got {axis!r}")
        else:
            cx, cy, r = self.geometry
            if r <= 0 or cx - r < 0 or cy - r < 0 or cx + r > size or cy + r > size:
                raise ValidationError(f"blob {self.geometry} outside {size}x{size}")
            yy, xx = np.mgrid[0:size, 0:size]
            m = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        return m


@dataclass(frozen=True)
class Seam:
    """Photometric shift applied to columns right of position*size."""

    position: float
    gain: tuple[float, float, float]
    bias: tuple[float, float, float]

    def __post_init__(self):
        if not 0.0 < self.position < 1.0:
            raise ValidationError("seam position must be a fraction in (0, 1)")
        if min(self.gain) <= 0:
            raise ValidationError("seam gains must be > 0")


@dataclass(frozen=True)
class SceneSpec:
    size: int
    layout: tuple[Primitive, ...]
    seam: Seam | None
    seed: int

    def __post_init__(self):
        if self.size <= 0:
            raise ValidationError("scene size must be positive")


def generate_scene(spec: SceneSpec) -> tuple[np.ndarray, LabelRaster]:
    """Render a scene and its exact ground truth, deterministically per seed."""
    size = spec.size
    labels = np.zeros((size, size), dtype=np.uint8)
    mean = np.zeros((size, size, 3), dtype=np.float64)
    jitter = np.zeros((size, size, 1), dtype=np.float64)
    for prim in spec.layout:
        m = prim.mask(size)
        labels[m] = prim.class_index
        mean[m] = prim.mean_rgb
        jitter[m, 0] = prim.jitter
    rng = np.random.default_rng(spec.seed)
    rgb = mean + jitter * rng.standard_normal((size, size, 3))
    if spec.seam is not None:
        split = round(spec.seam.position * size)
        gain = np.array(spec.seam.gain)
        bias = np.array(spec.seam.bias)
        rgb[:, split:, :] = rgb[:, split:, :] * gain + bias
    rgb = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
    return rgb, LabelRaster(labels)


def chip_seed(world_seed: int, chip_id: str) -> int:
    """Stable per-chip seed so parallel generation order cannot matter."""
    digest = hashlib.blake2b(f"{world_seed}:{chip_id}".encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little")


def _random_scene(size: int, seed: int, seam: Seam | None) -> SceneSpec:
    rng = np.random.default_rng(seed)
    classes = list(CLASS_COLORS)
    background = int(rng.choice(classes))
    mean, sigma = CLASS_COLORS[background]
    layout = [Primitive("rect", background, mean, sigma, (0, 0, size, size))]
    others = [c for c in classes if c != background]
    n_extra = int(rng.integers(2, 5))
    for cls in rng.choice(others, size=n_extra, replace=False):
        cls = int(cls)
        mean, sigma = CLASS_COLORS[cls]
        kind = ("rect", "strip", "blob")[int(rng.integers(0, 3))]
        if kind == "rect":
            w = int(rng.integers(size // 6, size // 2))
            h = int(rng.integers(size // 6, size // 2))
            x0 = int(rng.integers(0, size - w + 1))
            y0 = int(rng.integers(0, size - h + 1))
            geometry = (x0, y0, w, h)
        elif kind == "strip":
            thickness = int(rng.integers(max(size // 16, 2), size // 4))
            start = int(rng.integers(0, size - thickness + 1))
            geometry = ("h" if rng.random() < 0.5 else "v", start, thickness)
        else:
            r = int(rng.integers(max(size // 12, 3), size // 4))
            cx = int(rng.integers(r, size - r + 1))
            cy = int(rng.integers(r, size - r + 1))
            geometry = (cx, cy, r)
        layout.append(Primitive(kind, cls, mean, sigma, geometry))
    return SceneSpec(size=size, layout=tuple(layout), seam=seam, seed=seed)


def _world_photometry(rng: np.random.Generator) -> tuple[tuple, tuple]:
    """One gain/bias pair per world: a mosaic has one off-nominal imagery
    source, so every seam in it shifts the same way. The baseline classifier
    gives each class a single convex region, so it can absorb one extra
    photometric mode per class once examples are annotated, while a fresh
    mode per chip would stay unlearnable."""
    if rng.random() < 0.5:
        g = float(rng.uniform(1.35, 1.55))
        bias = rng.uniform(12.0, 25.0, size=3)
    else:
        g = float(rng.uniform(0.52, 0.66))
        bias = rng.uniform(-16.0, -6.0, size=3)
    return (g, g, g), tuple(float(b) for b in bias)


@dataclass(frozen=True)
class WorldChip:
    chip_id: str
    cell_id: str
    tag: str
    spec: SceneSpec
    geo: GeoTransform


def generate_world(
    n_cells: int,
    chips_per_cell: int,
    shift_fraction: float,
    seed: int,
    chip_size: int = 64,
    cell_size_deg: float = 1.0,
) -> list[WorldChip]:
    """Plan a deterministic world: n_cells stratification cells, each holding
    chips_per_cell chips, floor(shift_fraction * total) of them seam-shifted."""
    if n_cells < 1 or chips_per_cell < 1:
        raise ValidationError("cell and chip counts must be >= 1")
    if not 0.0 <= shift_fraction <= 1.0:
        raise ValidationError("shift_fraction must be in [0, 1]")
    total = n_cells * chips_per_cell
    n_shift = math.floor(shift_fraction * total)
    world_rng = np.random.default_rng(seed)
    shifted_slots = set(world_rng.permutation(total)[:n_shift].tolist())
    gain, bias = _world_photometry(world_rng)

    side = math.ceil(math.sqrt(chips_per_cell))
    extent = cell_size_deg / side  # degrees covered by one chip
    pixel = extent / chip_size

    chips: list[WorldChip] = []
    slot = 0
    for cell_idx in range(n_cells):
        for i in range(chips_per_cell):
            chip_id = f"c{cell_idx:03d}_{i:02d}"
            sub_col, sub_row = i % side, i // side
            geo = GeoTransform(
                origin_lon=cell_idx * cell_size_deg + sub_col * extent,
                origin_lat=cell_size_deg - sub_row * extent,
                pixel_size_x=pixel,
                pixel_size_y=-pixel,
            )
            tag = TAG_SHIFTED if slot in shifted_slots else TAG_CLEAN
            sseed = chip_seed(seed, chip_id)
            seam = None
            if tag == TAG_SHIFTED:
                pos_rng = np.random.default_rng(sseed ^ 0x5EA3)
                seam = Seam(position=float(pos_rng.uniform(0.25, 0.5)), gain=gain, bias=bias)
            spec = _random_scene(chip_size, sseed, seam)
            lon, lat = geo.pixel_to_world(chip_size / 2.0, chip_size / 2.0)
            chips.append(
                WorldChip(
                    chip_id=chip_id,
                    cell_id=cell_id_for(lon, lat, cell_size_deg),
                    tag=tag,
                    spec=spec,
                    geo=geo,
                )
            )
            slot += 1
    return chips


def write_world(chips: list[WorldChip], root: str | Path, seed: int, cell_size_deg: float = 1.0) -> dict:
    """Render a planned world to disk and write its manifest.

    Layout: root/manifest.json, root/rgb/<chip>.png, root/truth/<chip>.png.
    """
    root = Path(root)
    (root / "rgb").mkdir(parents=True, exist_ok=True)
    (root / "truth").mkdir(parents=True, exist_ok=True)
    records = []
    for wc in sorted(chips, key=lambda c: c.chip_id):
        rgb, truth = generate_scene(wc.spec)
        rgb_path = f"rgb/{wc.chip_id}.png"
        truth_path = f"truth/{wc.chip_id}.png"
        Image.fromarray(rgb, mode="RGB").save(root / rgb_path, format="PNG")
        (root / truth_path).write_bytes(encode_label_raster(truth))
        records.append(
            {
                "chip_id": wc.chip_id,
                "cell_id": wc.cell_id,
                "rgb_path": rgb_path,
                "truth_path": truth_path,
                "tag": wc.tag,
                "size": wc.spec.size,
                "geo": {
                    "origin_lon": wc.geo.origin_lon,
                    "origin_lat": wc.geo.origin_lat,
                    "pixel_size_x": wc.geo.pixel_size_x,
                    "pixel_size_y": wc.geo.pixel_size_y,
                },
            }
        )
    manifest = {"seed": seed, "cell_size_deg": cell_size_deg, "chips": records}
    with open(root / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(root: str | Path) -> dict:
    with open(Path(root) / "manifest.json", encoding="utf-8") as fh:
        return json.load(fh)


def record_geo(record: dict) -> GeoTransform:
    g = record["geo"]
    return GeoTransform(
        g["origin_lon"], g["origin_lat"], g["pixel_size_x"], g["pixel_size_y"]
    )


def load_world_chip(root: str | Path, record: dict) -> Chip:
    root = Path(root)
    rgb = np.asarray(Image.open(root / record["rgb_path"]).convert("RGB"))
    return Chip(
        id=record["chip_id"],
        rgb=rgb,
        offset=(0, 0),
        geo=record_geo(record),
        cell_id=record["cell_id"],
    )


def load_world_truth(root: str | Path, record: dict) -> LabelRaster:
    data = (Path(root) / record["truth_path"]).read_bytes()
    return decode_label_raster(data, geo=record_geo(record))
