"""Confusion-matrix accumulation and the accuracy metrics derived from it.

Counts are kept as exact integers and divided once in double precision,
so parallel per-chip accumulation merged in any order yields identical
metrics. Rows index ground truth, columns index prediction.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import CLASS_NAMES, NUM_CLASSES, LabelRaster

# Error-map codes and their rendered colors: white/black/red/green for
# TP/TN/FP/FN.
TP, TN, FP, FN = 0, 1, 2, 3
ERROR_COLORS = ((255, 255, 255), (0, 0, 0), (255, 0, 0), (0, 255, 0))


class ShapeError(ValueError):
    """Operands have incompatible dimensions."""


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # int64, shape (k, k); rows = truth, cols = prediction

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"confusion matrix must be square, got {arr.shape}")
        if arr.size and int(arr.min()) < 0:
            raise ValueError("confusion counts must be non-negative")
        arr = np.ascontiguousarray(arr, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fn(self, c: int) -> int:
        return int(self.counts[c].sum() - self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum() - self.counts[c, c])

    @classmethod
    def zero(cls, k: int) -> "ConfusionMatrix":
        return cls(np.zeros((k, k), dtype=np.int64))


@dataclass(frozen=True)
class MetricsReport:
    """Per-class and aggregate accuracy values; None marks a class that is
    absent from both truth and prediction (excluded from the averages)."""

    pa: tuple[float | None, ...]
    aa: float | None
    oa: float | None
    iou: tuple[float | None, ...]
    miou: float | None

    def to_dict(self) -> dict:
        return {
            "pa": list(self.pa),
            "aa": self.aa,
            "oa": self.oa,
            "iou": list(self.iou),
            "miou": self.miou,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def format_lines(self, names: tuple[str, ...] | None = None) -> str:
        """Render percentages with 2 decimals, one labelled line per value."""
        k = len(self.pa)
        names = names or _default_names(k)
        lines = []
        for c in range(k):
            lines.append(
                f"pa[{names[c]}] = {_pct(self.pa[c])}"
            )
        lines.append(f"aa = {_pct(self.aa)}")
        lines.append(f"oa = {_pct(self.oa)}")
        for c in range(k):
            lines.append(f"iou[{names[c]}] = {_pct(self.iou[c])}")
        lines.append(f"miou = {_pct(self.miou)}")
        return "\n".join(lines)


def _pct(v: float | None) -> str:
    return "undefined" if v is None else f"{100.0 * v:.2f}%"


def _default_names(k: int) -> tuple[str, ...]:
    if k == NUM_CLASSES + 1:
        return CLASS_NAMES
    return tuple(str(c) for c in range(k))


def accumulate_confusion(
    pred: LabelRaster,
    truth: LabelRaster,
    ignore_index: int | None = 0,
    num_classes: int = NUM_CLASSES + 1,
) -> ConfusionMatrix:
    """Count (truth, prediction) pairs per pixel, skipping ignored truth."""
    if pred.data.shape != truth.data.shape:
        raise ShapeError(
            f"prediction {pred.data.shape} and truth {truth.data.shape} differ"
        )
    t = truth.data.ravel().astype(np.int64)
    p = pred.data.ravel().astype(np.int64)
    if ignore_index is not None:
        keep = t != ignore_index
        t, p = t[keep], p[keep]
    if t.size and (int(t.max()) >= num_classes or int(p.max()) >= num_classes):
        raise ValueError(f"class index exceeds num_classes={num_classes}")
    flat = np.bincount(t * num_classes + p, minlength=num_classes * num_classes)
    return ConfusionMatrix(flat.reshape(num_classes, num_classes))


def merge_confusion(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    """Element-wise sum; associative and commutative."""
    if a.k != b.k:
        raise ShapeError(f"class counts differ: {a.k} vs {b.k}")
    return ConfusionMatrix(a.counts + b.counts)


def compute_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """PA, AA, OA, IoU and mIoU from exact counts.

    PA_c = TP/(TP+FN); IoU_c = TP/(TP+FN+FP); AA and mIoU average only the
    classes for which the respective denominator is positive; OA is total
    TP over total truth pixels. Each value is computed as an exact rational
    and rounded to float exactly once.
    """
    counts = cm.counts
    tp = np.diag(counts)
    row = counts.sum(axis=1)  # TP + FN per class
    col = counts.sum(axis=0)  # TP + FP per class
    union = row + col - tp  # TP + FN + FP

    pa_frac = [
        Fraction(int(tp[c]), int(row[c])) if row[c] > 0 else None for c in range(cm.k)
    ]
    iou_frac = [
        Fraction(int(tp[c]), int(union[c])) if union[c] > 0 else None
        for c in range(cm.k)
    ]
    defined_pa = [v for v in pa_frac if v is not None]
    defined_iou = [v for v in iou_frac if v is not None]
    aa = float(sum(defined_pa) / len(defined_pa)) if defined_pa else None
    miou = float(sum(defined_iou) / len(defined_iou)) if defined_iou else None
    total = int(row.sum())
    oa = float(Fraction(int(tp.sum()), total)) if total > 0 else None
    return MetricsReport(
        pa=tuple(None if v is None else float(v) for v in pa_frac),
        aa=aa,
        oa=oa,
        iou=tuple(None if v is None else float(v) for v in iou_frac),
        miou=miou,
    )


def normalize_confusion(cm: ConfusionMatrix) -> np.ndarray:
    """Divide each nonzero row by its sum; zero rows stay zero."""
    counts = cm.counts.astype(np.float64)
    sums = counts.sum(axis=1, keepdims=True)
    out = np.divide(counts, sums, out=np.zeros_like(counts), where=sums > 0)
    return out


def normalized_confusion_csv(
    cm: ConfusionMatrix, names: tuple[str, ...] | None = None
) -> str:
    """CSV of the row-normalized matrix with class-name header row/column."""
    names = names or _default_names(cm.k)
    norm = normalize_confusion(cm)
    out = io.StringIO()
    out.write("truth\\pred," + ",".join(names[: cm.k]) + "\n")
    for c in range(cm.k):
        out.write(names[c] + "," + ",".join(f"{v:.6f}" for v in norm[c]) + "\n")
    return out.getvalue()


@dataclass(frozen=True)
class ErrorRaster:
    """Per-pixel TP/TN/FP/FN codes."""

    data: np.ndarray  # uint8 codes, shape (height, width)

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise ShapeError(f"error raster must be 2-D, got {arr.shape}")
        if arr.size and int(arr.max()) > FN:
            raise ValueError("error raster codes must be TP/TN/FP/FN")
        arr = np.ascontiguousarray(arr, dtype=np.uint8)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    def to_rgb(self) -> np.ndarray:
        lut = np.array(ERROR_COLORS, dtype=np.uint8)
        return lut[self.data]


def error_map(pred_mask: np.ndarray, truth_mask: np.ndarray) -> ErrorRaster:
    """Classify each pixel of a binary prediction against a binary reference."""
    pred = np.asarray(pred_mask).astype(bool)
    truth = np.asarray(truth_mask).astype(bool)
    if pred.shape != truth.shape:
        raise ShapeError(f"mask shapes differ: {pred.shape} vs {truth.shape}")
    codes = np.full(pred.shape, TN, dtype=np.uint8)
    codes[pred & truth] = TP
    codes[pred & ~truth] = FP
    codes[~pred & truth] = FN
    return ErrorRaster(codes)
