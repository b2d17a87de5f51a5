"""Candidate scoring and dataset management for the annotation loop:
entropy ranking, per-cell stratified selection, rule-based class remapping,
and train/val/test split assignment.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .core import CLASS_NAMES, NUM_CLASSES, LabelRaster, ProbRaster, ValidationError

DECISIONS = ("pending", "failure", "clean")
SOURCES = ("human", "entropy")

# Default stratification cell: 1x1 degree lon/lat tiles.
DEFAULT_CELL_SIZE_DEG = 1.0


def cell_id_for(lon: float, lat: float, cell_size_deg: float = DEFAULT_CELL_SIZE_DEG) -> str:
    """Deterministic id of the stratification cell containing (lon, lat)."""
    if cell_size_deg <= 0:
        raise ValidationError("cell size must be positive")
    cx = math.floor(lon / cell_size_deg)
    cy = math.floor(lat / cell_size_deg)
    return f"{cx}_{cy}"


@dataclass(frozen=True)
class Candidate:
    """A scored chip in the human review queue."""

    chip_id: str
    cell_id: str
    entropy: float
    decision: str = "pending"
    source: str = "entropy"
    annotation: str | None = None  # label-raster path, set once marked failure
    rgb_path: str | None = None
    center_lon: float | None = None  # chip center, lets viewers jump to it
    center_lat: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.entropy <= 1.0:
            raise ValidationError(f"entropy {self.entropy} outside [0, 1]")
        if self.decision not in DECISIONS:
            raise ValidationError(f"unknown decision {self.decision!r}")
        if self.source not in SOURCES:
            raise ValidationError(f"unknown source {self.source!r}")
        if self.annotation is not None and self.decision != "failure":
            raise ValidationError("annotation only allowed on failure candidates")

    def decided(self, decision: str, annotation: str | None = None) -> "Candidate":
        """Transition pending -> failure|clean."""
        if self.decision != "pending":
            raise ValidationError(f"candidate {self.chip_id} already decided")
        if decision not in ("failure", "clean"):
            raise ValidationError(f"invalid decision {decision!r}")
        return replace(self, decision=decision, annotation=annotation)

    def to_dict(self) -> dict:
        d = {
            "chip_id": self.chip_id,
            "cell_id": self.cell_id,
            "entropy": self.entropy,
            "decision": self.decision,
            "source": self.source,
        }
        if self.annotation is not None:
            d["annotation"] = self.annotation
        if self.rgb_path is not None:
            d["rgb_path"] = self.rgb_path
        if self.center_lon is not None:
            d["center_lon"] = self.center_lon
            d["center_lat"] = self.center_lat
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        return cls(
            chip_id=d["chip_id"],
            cell_id=d["cell_id"],
            entropy=d["entropy"],
            decision=d.get("decision", "pending"),
            source=d.get("source", "entropy"),
            annotation=d.get("annotation"),
            rgb_path=d.get("rgb_path"),
            center_lon=d.get("center_lon"),
            center_lat=d.get("center_lat"),
        )


def chip_entropy(probs: ProbRaster) -> float:
    """Mean per-pixel Shannon entropy of the class probabilities, normalized
    by the entropy of the uniform distribution; 1.0 = maximally uncertain.

    Computed in base-2 logs (the ratio is base-invariant) so dyadic
    probabilities score exactly.
    """
    p = probs.data.astype(np.float64)
    plogp = np.where(p > 0.0, p * np.log2(np.maximum(p, 1e-300)), 0.0)
    per_pixel = -plogp.sum(axis=0)
    score = float(per_pixel.mean()) / math.log2(probs.k)
    return min(max(score, 0.0), 1.0)


def stratified_topk(candidates: list[Candidate], k: int = 2) -> list[Candidate]:
    """Highest-entropy candidates per stratification cell, at most k per cell
    (default two, the per-tile selection rule).

    Ties break by ascending chip_id; output is ordered by cell_id, then
    descending entropy, then chip_id.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    cells: dict[str, list[Candidate]] = {}
    for cand in candidates:
        cells.setdefault(cand.cell_id, []).append(cand)
    selected: list[Candidate] = []
    for cell in sorted(cells):
        ranked = sorted(cells[cell], key=lambda c: (-c.entropy, c.chip_id))
        selected.extend(ranked[:k])
    return selected


@dataclass(frozen=True)
class RemapRule:
    """Total mapping from source class index to target class index."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        if len(self.mapping) != NUM_CLASSES + 1:
            raise ValidationError(
                f"mapping must cover all {NUM_CLASSES + 1} source classes"
            )
        for src, dst in enumerate(self.mapping):
            if not 0 <= dst <= NUM_CLASSES:
                raise ValidationError(f"rule maps {src} to invalid class {dst}")

    @classmethod
    def identity(cls) -> "RemapRule":
        return cls(tuple(range(NUM_CLASSES + 1)))


def apply_class_remap(labels: LabelRaster, rule: RemapRule) -> LabelRaster:
    """Substitute every class index through the rule table."""
    lut = np.array(rule.mapping, dtype=np.uint8)
    return LabelRaster(lut[labels.data], geo=labels.geo)


def parse_remap_rule(text: str) -> RemapRule:
    """Parse 'source -> target' lines (class names or indices); sources not
    mentioned map to themselves. '#' starts a comment."""
    names = {name: idx for idx, name in enumerate(CLASS_NAMES)}

    def resolve(token: str) -> int:
        token = token.strip()
        if token in names:
            return names[token]
        try:
            idx = int(token)
        except ValueError:
            raise ValidationError(f"unknown class {token!r} in remap rule") from None
        if not 0 <= idx <= NUM_CLASSES:
            raise ValidationError(f"class index {idx} outside 0..{NUM_CLASSES}")
        return idx

    mapping = list(range(NUM_CLASSES + 1))
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "->" not in line:
            raise ValidationError(f"line {lineno}: expected 'source -> target'")
        src_tok, dst_tok = line.split("->", 1)
        mapping[resolve(src_tok)] = resolve(dst_tok)
    return RemapRule(tuple(mapping))


@dataclass(frozen=True)
class SplitAssignment:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "train": sorted(self.train),
            "val": sorted(self.val),
            "test": sorted(self.test),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SplitAssignment":
        return cls(tuple(d["train"]), tuple(d["val"]), tuple(d["test"]))


def assign_splits(
    ids: set[str] | list[str],
    ratios: tuple[float, float, float],
    seed: int,
) -> SplitAssignment:
    """Seeded uniform shuffle, then contiguous cuts: train and val take the
    floor of their share, test takes the remainder."""
    ids = sorted(set(ids))
    if not ids:
        raise ValidationError("cannot split an empty id set")
    if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValidationError(f"ratios must be positive and sum to 1, got {ratios}")
    rng = np.random.default_rng(seed)
    order = [ids[i] for i in rng.permutation(len(ids))]
    n = len(order)
    n_train = math.floor(n * ratios[0])
    n_val = math.floor(n * ratios[1])
    return SplitAssignment(
        train=tuple(order[:n_train]),
        val=tuple(order[n_train : n_train + n_val]),
        test=tuple(order[n_train + n_val :]),
    )


def save_selection_report(candidates: list[Candidate], path) -> None:
    doc = {"candidates": [c.to_dict() for c in candidates]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_selection_report(path) -> list[Candidate]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return [Candidate.from_dict(d) for d in doc["candidates"]]
