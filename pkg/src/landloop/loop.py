"""Iteration driver for the four-step cycle: train on the labeled set, map
the unlabeled pool, emit entropy-ranked candidates for review, and fold the
reviewed annotations back into the training set.

All state lives in a directory of plain JSON/PNG artifacts, so a run is
fully determined by (world seed, loop seed, decision state) and can be
replayed or resumed byte-identically.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GeoTransform, LabelRaster, ValidationError, encode_label_raster
from .metrics import ConfusionMatrix, accumulate_confusion, compute_metrics, merge_confusion
from .model import TrainConfig, argmax_labels, predict_probs, save_params, train_classifier
from .selection import (
    Candidate,
    SplitAssignment,
    assign_splits,
    chip_entropy,
    load_selection_report,
    save_selection_report,
    stratified_topk,
)
from .synth import TAG_SHIFTED, chip_seed, load_manifest, load_world_chip, load_world_truth, record_geo
from .tiles import build_pyramid, build_rgb_pyramid, composite_overlay, write_pyramid


@dataclass(frozen=True)
class LoopConfig:
    seed: int = 0
    iterations: int = 2
    candidates_per_cell: int = 2
    ratios: tuple[float, float, float] = (0.6, 0.1, 0.3)
    epochs: int = 40
    learning_rate: float = 0.05
    batch_pixels: int = 8192

    @classmethod
    def from_file(cls, path: str | Path) -> "LoopConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if "ratios" in doc:
            doc["ratios"] = tuple(doc["ratios"])
        return cls(**doc)


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    train_chips: int
    test_oa: float | None
    test_miou: float | None
    candidates_emitted: int
    test_oa_by_tag: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "train_chips": self.train_chips,
            "test_oa": self.test_oa,
            "test_miou": self.test_miou,
            "candidates_emitted": self.candidates_emitted,
            "test_oa_by_tag": self.test_oa_by_tag,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _dump_json(doc, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_json(path: Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _splits(state: Path, ids, cfg: LoopConfig) -> SplitAssignment:
    path = state / "splits.json"
    if path.exists():
        return SplitAssignment.from_dict(_load_json(path))
    # Derived stream: reusing the raw seed would replay the world generator's
    # permutation and correlate the split with the clean/shifted assignment.
    splits = assign_splits(ids, cfg.ratios, chip_seed(cfg.seed, "splits"))
    _dump_json(splits.to_dict(), path)
    return splits


def _labeled_rounds(state: Path, records: dict, splits: SplitAssignment) -> list:
    """Load the growing labeled set; round 0 is the initially labeled chips
    of the train split (the stand-in for preexisting labeled data)."""
    path = state / "labeled.json"
    if path.exists():
        return _load_json(path)["rounds"]
    initial = [
        {"chip_id": cid, "label_path": records[cid]["truth_path"]}
        for cid in sorted(splits.train)
        if records[cid]["tag"] != TAG_SHIFTED
    ]
    rounds = [initial]
    _dump_json({"rounds": rounds}, path)
    return rounds


def _merge_annotations(state: Path, rounds: list, splits: SplitAssignment) -> list:
    """Fold reviewed annotations into the labeled set; the set only grows."""
    ann_path = state / "annotations.json"
    if not ann_path.exists():
        return rounds
    labeled = {row["chip_id"] for rnd in rounds for row in rnd}
    train_ids = set(splits.train)
    fresh = []
    for row in _load_json(ann_path)["annotations"]:
        cid = row["chip_id"]
        if cid in labeled or cid not in train_ids:
            continue
        if "label_path" not in row:
            raise ValidationError(f"annotation for {cid} carries no label_path")
        fresh.append({"chip_id": cid, "label_path": row["label_path"]})
    if fresh:
        rounds = rounds + [sorted(fresh, key=lambda r: r["chip_id"])]
        _dump_json({"rounds": rounds}, state / "labeled.json")
    return rounds


def run_iteration(
    state_dir: str | Path, cfg: LoopConfig, world_root: str | Path | None = None
) -> IterationReport:
    """One train -> map -> score -> select pass over the current state."""
    state = Path(state_dir)
    world = Path(world_root) if world_root else state / "world"
    manifest = load_manifest(world)
    records = {rec["chip_id"]: rec for rec in manifest["chips"]}
    cell_size = manifest.get("cell_size_deg", 1.0)

    splits = _splits(state, sorted(records), cfg)
    rounds = _labeled_rounds(state, records, splits)
    rounds = _merge_annotations(state, rounds, splits)
    iteration = len(rounds) - 1
    labeled = {row["chip_id"]: row["label_path"] for rnd in rounds for row in rnd}
    if not labeled:
        raise ValidationError("labeled set is empty; nothing to train on")

    train_set = [
        (
            load_world_chip(world, records[cid]),
            LabelRaster(
                np.asarray(Image.open(world / label_path)),
                geo=record_geo(records[cid]),
            ),
        )
        for cid, label_path in sorted(labeled.items())
    ]
    params = train_classifier(
        train_set,
        TrainConfig(
            epochs=cfg.epochs,
            learning_rate=cfg.learning_rate,
            batch_pixels=cfg.batch_pixels,
            seed=chip_seed(cfg.seed, f"train:{iteration}"),
        ),
    )
    iter_dir = state / "iterations" / f"iter_{iteration:03d}"
    iter_dir.mkdir(parents=True, exist_ok=True)
    save_params(params, iter_dir / "params.json")

    # Map the unlabeled pool and rank candidates by entropy.
    pred_dir = iter_dir / "predictions"
    pred_dir.mkdir(exist_ok=True)
    pool = [cid for cid in splits.train if cid not in labeled]
    candidates = []
    for cid in sorted(pool):
        rec = records[cid]
        chip = load_world_chip(world, rec)
        probs = predict_probs(params, chip)
        (pred_dir / f"{cid}.png").write_bytes(encode_label_raster(argmax_labels(probs)))
        lon, lat = chip.center_lonlat()
        candidates.append(
            Candidate(
                chip_id=cid,
                cell_id=rec["cell_id"],
                entropy=chip_entropy(probs),
                source="entropy",
                rgb_path=rec["rgb_path"],
                center_lon=lon,
                center_lat=lat,
            )
        )
    selected = stratified_topk(candidates, cfg.candidates_per_cell) if candidates else []
    save_selection_report(selected, iter_dir / "selection.json")
    save_selection_report(selected, state / "selection.json")

    # Held-out evaluation, overall and per generator tag.
    def evaluate(ids):
        cm = ConfusionMatrix.zero(9)
        for cid in ids:
            rec = records[cid]
            chip = load_world_chip(world, rec)
            pred = argmax_labels(predict_probs(params, chip))
            truth = load_world_truth(world, rec)
            cm = merge_confusion(cm, accumulate_confusion(pred, truth))
        return compute_metrics(cm)

    test_ids = sorted(splits.test)
    overall = evaluate(test_ids)
    by_tag = {}
    for tag in sorted({records[cid]["tag"] for cid in test_ids}):
        subset = [cid for cid in test_ids if records[cid]["tag"] == tag]
        by_tag[tag] = evaluate(subset).oa

    report = IterationReport(
        iteration=iteration,
        train_chips=len(labeled),
        test_oa=overall.oa,
        test_miou=overall.miou,
        candidates_emitted=len(selected),
        test_oa_by_tag=by_tag,
    )
    _dump_json(report.to_dict(), iter_dir / "report.json")
    return report


def scripted_review(
    state_dir: str | Path, world_root: str | Path | None = None
) -> int:
    """Automated stand-in for the human triage step: every shifted-tagged
    candidate is marked a failure and gets the generator truth as its
    annotation. Returns the number of failures recorded."""
    state = Path(state_dir)
    world = Path(world_root) if world_root else state / "world"
    manifest = load_manifest(world)
    records = {rec["chip_id"]: rec for rec in manifest["chips"]}
    candidates = load_selection_report(state / "selection.json")
    rows = []
    for cand in candidates:
        rec = records[cand.chip_id]
        if rec["tag"] == TAG_SHIFTED:
            rows.append(
                {
                    "chip_id": cand.chip_id,
                    "cell_id": cand.cell_id,
                    "label_path": rec["truth_path"],
                }
            )
    rows.sort(key=lambda r: r["chip_id"])
    _dump_json({"annotations": rows}, state / "annotations.json")
    return len(rows)


def annotations_from_export(
    state_dir: str | Path,
    export_path: str | Path,
    world_root: str | Path | None = None,
) -> int:
    """Turn a service export manifest (failure candidates) into the loop's
    annotation manifest, attaching the world's truth rasters as the labels.

    Desk-scale stand-in for the external annotation tool a human would use;
    with real imagery the label_path entries would point at hand-made labels.
    """
    state = Path(state_dir)
    world = Path(world_root) if world_root else state / "world"
    manifest = load_manifest(world)
    records = {rec["chip_id"]: rec for rec in manifest["chips"]}
    export = _load_json(Path(export_path))
    rows = []
    for row in export["annotations"]:
        rec = records.get(row["chip_id"])
        if rec is None:
            raise ValidationError(f"exported chip {row['chip_id']} not in the world")
        rows.append(
            {
                "chip_id": rec["chip_id"],
                "cell_id": rec["cell_id"],
                "label_path": rec["truth_path"],
            }
        )
    rows.sort(key=lambda r: r["chip_id"])
    _dump_json({"annotations": rows}, state / "annotations.json")
    return len(rows)


def run_loop(
    state_dir: str | Path,
    cfg: LoopConfig,
    iterations: int | None = None,
    world_root: str | Path | None = None,
) -> list[IterationReport]:
    """Run N full cycles with the scripted reviewer between iterations."""
    n = cfg.iterations if iterations is None else iterations
    reports = []
    for i in range(n):
        reports.append(run_iteration(state_dir, cfg, world_root))
        if i < n - 1:
            scripted_review(state_dir, world_root)
    return reports


def compose_world_raster(
    world_root: str | Path,
    source: str = "rgb",
    predictions_dir: str | Path | None = None,
):
    """Mosaic all world chips into one raster with a single GeoTransform.

    source: 'rgb', 'truth', or 'predictions' (using predictions_dir; chips
    without a prediction stay class 0). Requires a uniform pixel size, which
    generate_world guarantees.
    """
    world = Path(world_root)
    manifest = load_manifest(world)
    recs = manifest["chips"]
    if not recs:
        raise ValidationError("world has no chips")
    geos = [record_geo(r) for r in recs]
    psx = geos[0].pixel_size_x
    psy = geos[0].pixel_size_y
    if any(abs(g.pixel_size_x - psx) > 1e-15 or abs(g.pixel_size_y - psy) > 1e-15 for g in geos):
        raise ValidationError("world chips do not share one pixel size")
    lon_min = min(g.origin_lon for g in geos)
    lat_max = max(g.origin_lat for g in geos)
    cols = [round((g.origin_lon - lon_min) / psx) for g in geos]
    rows = [round((g.origin_lat - lat_max) / psy) for g in geos]
    width = max(c + r["size"] for c, r in zip(cols, recs))
    height = max(rw + r["size"] for rw, r in zip(rows, recs))

    geo = GeoTransform(lon_min, lat_max, psx, psy)
    if source == "rgb":
        canvas = np.zeros((height, width, 3), dtype=np.uint8)
    else:
        canvas = np.zeros((height, width), dtype=np.uint8)
    for rec, col, row in zip(recs, cols, rows):
        size = rec["size"]
        if source == "rgb":
            tile = np.asarray(Image.open(world / rec["rgb_path"]).convert("RGB"))
        elif source == "truth":
            tile = load_world_truth(world, rec).data
        elif source == "predictions":
            path = Path(predictions_dir) / f"{rec['chip_id']}.png"
            if not path.exists():
                continue
            tile = np.asarray(Image.open(path))
        else:
            raise ValidationError(f"unknown compose source {source!r}")
        canvas[row : row + size, col : col + size] = tile
    return canvas, geo


def build_world_tiles(
    world_root: str | Path,
    out_root: str | Path,
    z_min: int,
    z_max: int,
    predictions_dir: str | Path | None = None,
    opacity: float = 0.3,
    tile_size: int = 256,
) -> dict:
    """Imagery, prediction, and static composite pyramids for a whole world."""
    out = Path(out_root)
    rgb, geo = compose_world_raster(world_root, "rgb")
    imagery = build_rgb_pyramid(rgb, geo, z_min, z_max, tile_size)
    write_pyramid(imagery, out / "imagery")

    label_source = "predictions" if predictions_dir else "truth"
    labels, _ = compose_world_raster(world_root, label_source, predictions_dir)
    prediction = build_pyramid(LabelRaster(labels, geo=geo), z_min, z_max, tile_size)
    write_pyramid(prediction, out / "prediction")

    composite = {}
    for addr, png in imagery.items():
        base = np.asarray(Image.open(io.BytesIO(png)).convert("RGB"))
        over_png = prediction.get(addr)
        if over_png is None:
            composite[addr] = png
            continue
        over = np.asarray(Image.open(io.BytesIO(over_png)).convert("RGB"))
        blended = composite_overlay(base, over, opacity)
        buf = io.BytesIO()
        Image.fromarray(blended, mode="RGB").save(buf, format="PNG")
        composite[addr] = buf.getvalue()
    write_pyramid(composite, out / "composite")
    return {
        "imagery": len(imagery),
        "prediction": len(prediction),
        "composite": len(composite),
    }
