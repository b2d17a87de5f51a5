"""Pluggable per-pixel classifier.

The trainable baseline is a multinomial logistic model over color and local
texture features, optimized with mini-batch Adam on labeled pixels. It
deliberately stays small: the loop around it is the thing under test, and
an external model can drive the same pipeline through OEMP probability
rasters (see load_external_probs).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter

from .core import (
    Chip,
    LabelRaster,
    NUM_CLASSES,
    ProbRaster,
    ValidationError,
    decode_prob_raster,
)
from .metrics import ShapeError

FEATURE_DIM = 10
_WINDOW = 5
_PARAMS_VERSION = 1

# Fixed Adam moments; only the step size is configurable.
_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.05
    batch_pixels: int = 8192
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.batch_pixels < 1:
            raise ValidationError("batch_pixels must be >= 1")


@dataclass(frozen=True)
class ClassifierParams:
    weights: np.ndarray  # float64, shape (k, FEATURE_DIM)
    bias: np.ndarray  # float64, shape (k,)
    seed: int
    epochs_trained: int

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        b = np.ascontiguousarray(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
            raise ValidationError(f"inconsistent parameter shapes {w.shape}, {b.shape}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValidationError("parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def zero(cls, k: int = NUM_CLASSES, feature_dim: int = FEATURE_DIM, seed: int = 0):
        return cls(np.zeros((k, feature_dim)), np.zeros(k), seed=seed, epochs_trained=0)


def extract_features(rgb: np.ndarray) -> np.ndarray:
    """Per-pixel feature raster: scaled RGB, 5x5 local mean and standard
    deviation per channel, and a constant 1; borders use edge replication."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValidationError(f"expected HxWx3 rgb, got {rgb.shape}")
    scaled = rgb.astype(np.float64) / 255.0
    feats = np.empty(rgb.shape[:2] + (FEATURE_DIM,), dtype=np.float64)
    feats[..., 0:3] = scaled
    for ch in range(3):
        x = scaled[..., ch]
        mean = uniform_filter(x, size=_WINDOW, mode="nearest")
        mean_sq = uniform_filter(x * x, size=_WINDOW, mode="nearest")
        feats[..., 3 + ch] = mean
        feats[..., 6 + ch] = np.sqrt(np.clip(mean_sq - mean * mean, 0.0, None))
    feats[..., 9] = 1.0
    return feats


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of softmax(logits) against integer labels, and its
    analytic gradient with respect to the logits."""
    n = logits.shape[0]
    probs = softmax(logits)
    picked = np.clip(probs[np.arange(n), labels], 1e-12, None)
    loss = float(-np.log(picked).mean())
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def _gather_labeled_pixels(chips, ignore_index=0):
    xs, ys = [], []
    for chip, labels in chips:
        if chip.rgb.shape[:2] != labels.data.shape:
            raise ShapeError(
                f"chip {chip.id}: rgb {chip.rgb.shape[:2]} vs labels {labels.data.shape}"
            )
        feats = extract_features(chip.rgb).reshape(-1, FEATURE_DIM)
        lab = labels.data.ravel().astype(np.int64)
        keep = lab != ignore_index
        xs.append(feats[keep])
        ys.append(lab[keep] - 1)  # logit index c-1 for class c
    x = np.concatenate(xs) if xs else np.empty((0, FEATURE_DIM))
    y = np.concatenate(ys) if ys else np.empty((0,), dtype=np.int64)
    return x, y


def train_classifier(
    chips: list[tuple[Chip, LabelRaster]], cfg: TrainConfig
) -> ClassifierParams:
    """Fit the softmax baseline on every labeled pixel of the given chips.

    Deterministic for a fixed (chips, seed, config); class 0 pixels carry
    no loss.
    """
    x, y = _gather_labeled_pixels(chips)
    if x.shape[0] == 0:
        raise ValidationError("no labeled pixels in the training set")
    k = NUM_CLASSES
    w = np.zeros((k, FEATURE_DIM))
    b = np.zeros(k)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    rng = np.random.default_rng(cfg.seed)
    t = 0
    n = x.shape[0]
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_pixels):
            batch = order[start : start + cfg.batch_pixels]
            xb, yb = x[batch], y[batch]
            logits = xb @ w.T + b
            _, grad_logits = softmax_cross_entropy(logits, yb)
            g_w = grad_logits.T @ xb
            g_b = grad_logits.sum(axis=0)
            t += 1
            corr1 = 1.0 - _ADAM_BETA1**t
            corr2 = 1.0 - _ADAM_BETA2**t
            for g, theta, m, v in ((g_w, w, m_w, v_w), (g_b, b, m_b, v_b)):
                m *= _ADAM_BETA1
                m += (1.0 - _ADAM_BETA1) * g
                v *= _ADAM_BETA2
                v += (1.0 - _ADAM_BETA2) * g * g
                theta -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + _ADAM_EPS)
    return ClassifierParams(w, b, seed=cfg.seed, epochs_trained=cfg.epochs)


def predict_probs(params: ClassifierParams, chip: Chip) -> ProbRaster:
    """Per-pixel softmax class probabilities for one chip."""
    feats = extract_features(chip.rgb)
    if params.feature_dim != FEATURE_DIM:
        raise ShapeError(
            f"params expect {params.feature_dim} features, extractor yields {FEATURE_DIM}"
        )
    h, w_px = feats.shape[:2]
    logits = feats.reshape(-1, FEATURE_DIM) @ params.weights.T + params.bias
    probs = softmax(logits).astype(np.float32)
    planes = probs.T.reshape(params.k, h, w_px)
    return ProbRaster(planes, geo=chip.geo)


def argmax_labels(probs: ProbRaster) -> LabelRaster:
    """Most probable class per pixel; ties resolve to the lowest class index."""
    return LabelRaster(
        (probs.data.argmax(axis=0) + 1).astype(np.uint8), geo=probs.geo
    )


def cross_entropy_loss(
    probs: ProbRaster, truth: LabelRaster, ignore_index: int = 0
) -> float:
    """Mean -ln p[true class] over non-ignored pixels (probabilities clamped
    to 1e-12 before the log)."""
    if (probs.height, probs.width) != truth.data.shape:
        raise ShapeError(
            f"probs {(probs.height, probs.width)} vs truth {truth.data.shape}"
        )
    lab = truth.data.ravel().astype(np.int64)
    keep = lab != ignore_index
    if not keep.any():
        raise ValidationError("no non-ignored pixels to score")
    flat = probs.data.reshape(probs.k, -1).astype(np.float64)
    picked = flat[lab[keep] - 1, np.flatnonzero(keep)]
    return float(-np.log(np.clip(picked, 1e-12, None)).mean())


def blend_probs(
    pieces: list[tuple[tuple[int, int], ProbRaster]], width: int, height: int
) -> ProbRaster:
    """Arithmetic mean of chip probabilities over a full raster; overlapping
    windows average, and every pixel must be covered by at least one chip."""
    if not pieces:
        raise ValidationError("no probability chips to blend")
    k = pieces[0][1].k
    acc = np.zeros((k, height, width), dtype=np.float64)
    cover = np.zeros((height, width), dtype=np.int64)
    for (col, row), pr in pieces:
        if pr.k != k:
            raise ShapeError("chip class counts differ")
        acc[:, row : row + pr.height, col : col + pr.width] += pr.data
        cover[row : row + pr.height, col : col + pr.width] += 1
    if int(cover.min()) == 0:
        raise ValidationError("blend does not cover every pixel")
    return ProbRaster((acc / cover).astype(np.float32))


def save_params(params: ClassifierParams, path: str | Path) -> None:
    doc = {
        "version": _PARAMS_VERSION,
        "k": params.k,
        "feature_dim": params.feature_dim,
        "seed": params.seed,
        "epochs_trained": params.epochs_trained,
        "weights": params.weights.tolist(),
        "bias": params.bias.tolist(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def load_params(path: str | Path) -> ClassifierParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("version") != _PARAMS_VERSION:
        raise ValidationError(f"unsupported params version {doc.get('version')}")
    return ClassifierParams(
        np.array(doc["weights"], dtype=np.float64),
        np.array(doc["bias"], dtype=np.float64),
        seed=doc["seed"],
        epochs_trained=doc["epochs_trained"],
    )


def read_prob_manifest(path: str | Path) -> dict[str, Path]:
    """External-probability manifest: one JSON record {chip_id, oemp_path}
    per line; paths resolve relative to the manifest."""
    base = Path(path).parent
    table: dict[str, Path] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        table[rec["chip_id"]] = base / rec["oemp_path"]
    return table


def load_external_probs(manifest_path: str | Path, chip: Chip) -> ProbRaster:
    """Probability raster computed elsewhere for this chip, from an OEMP file."""
    table = read_prob_manifest(manifest_path)
    if chip.id not in table:
        raise KeyError(f"chip {chip.id} not present in manifest {manifest_path}")
    oemp = table[chip.id]
    if not oemp.exists():
        raise FileNotFoundError(f"OEMP file missing: {oemp}")
    probs = decode_prob_raster(oemp.read_bytes(), geo=chip.geo)
    if (probs.height, probs.width) != (chip.size, chip.size):
        raise ShapeError(
            f"OEMP raster {probs.width}x{probs.height} does not match "
            f"chip size {chip.size}"
        )
    return probs
