"""Command-line interface: one thin subcommand per pipeline operation.

Every subcommand takes --seed and --config, prints a machine-readable JSON
report to stdout, and exits 1 on operation failure (usage errors exit 2).
"""

from __future__ import annotations

import dataclasses
import functools
import json
import sys
from pathlib import Path

import click

from . import core, loop, metrics, model, refeval, selection, synth, tiles
from .service import app as service_app
from .service import load_service_config


def _emit(doc) -> None:
    click.echo(json.dumps(doc, sort_keys=True))


def _fail_on_error(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except (ValueError, KeyError, OSError) as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def _common(f):
    f = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="JSON file with defaults for this command.")(f)
    f = click.option("--seed", type=int, default=None, help="Deterministic seed.")(f)
    return f


def _load_config(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _parse_geo(text: str) -> core.GeoTransform:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 4:
        raise click.ClickException("--geo expects 'origin_lon,origin_lat,pixel_size_x,pixel_size_y'")
    return core.GeoTransform(*parts)


def _label_png(path) -> core.LabelRaster:
    return core.decode_label_raster(Path(path).read_bytes())


@click.group()
def main():
    """Human-in-the-loop land-cover mapping pipeline."""


@main.command("synth-world")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--cells", default=8, show_default=True)
@click.option("--chips-per-cell", default=4, show_default=True)
@click.option("--shift-fraction", default=0.5, show_default=True)
@click.option("--chip-size", default=64, show_default=True)
@click.option("--cell-size", default=1.0, show_default=True)
@_common
@_fail_on_error
def synth_world(out, cells, chips_per_cell, shift_fraction, chip_size, cell_size, seed, config):
    """Generate a deterministic synthetic world on disk."""
    cfg = _load_config(config)
    seed = seed if seed is not None else cfg.get("seed", 0)
    plan = synth.generate_world(
        cells, chips_per_cell, shift_fraction, seed, chip_size, cell_size
    )
    manifest = synth.write_world(plan, out, seed, cell_size)
    _emit(
        {
            "world": str(out),
            "chips": len(manifest["chips"]),
            "shifted": sum(1 for c in manifest["chips"] if c["tag"] == synth.TAG_SHIFTED),
        }
    )


def _world_chips(world, ids):
    manifest = synth.load_manifest(world)
    records = {r["chip_id"]: r for r in manifest["chips"]}
    if ids:
        missing = [i for i in ids if i not in records]
        if missing:
            raise click.ClickException(f"unknown chip ids: {missing}")
        chosen = list(ids)
    else:
        chosen = sorted(records)
    return manifest, records, chosen


@main.command()
@click.option("--world", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--id", "ids", multiple=True, help="Restrict training to these chips.")
@click.option("--epochs", default=None, type=int)
@click.option("--learning-rate", default=None, type=float)
@click.option("--batch-pixels", default=None, type=int)
@_common
@_fail_on_error
def train(world, out, ids, epochs, learning_rate, batch_pixels, seed, config):
    """Fit the baseline classifier on labeled world chips."""
    cfg = _load_config(config)
    tc = model.TrainConfig(
        epochs=epochs if epochs is not None else cfg.get("epochs", 200),
        learning_rate=learning_rate if learning_rate is not None else cfg.get("learning_rate", 0.05),
        batch_pixels=batch_pixels if batch_pixels is not None else cfg.get("batch_pixels", 8192),
        seed=seed if seed is not None else cfg.get("seed", 0),
    )
    _, records, chosen = _world_chips(world, ids)
    chips = [
        (synth.load_world_chip(world, records[cid]), synth.load_world_truth(world, records[cid]))
        for cid in chosen
    ]
    params = model.train_classifier(chips, tc)
    model.save_params(params, out)
    _emit({"params": str(out), "train_chips": len(chips), "epochs": tc.epochs})


@main.command()
@click.option("--world", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--params", "params_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--id", "ids", multiple=True)
@click.option("--probs-out", type=click.Path(file_okay=False), default=None,
              help="Also write OEMP probability rasters plus a manifest here.")
@_common
@_fail_on_error
def predict(world, params_path, out, ids, probs_out, seed, config):
    """Map chips with a trained classifier; writes label PNGs."""
    params = model.load_params(params_path)
    _, records, chosen = _world_chips(world, ids)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    manifest_lines = []
    for cid in chosen:
        chip = synth.load_world_chip(world, records[cid])
        probs = model.predict_probs(params, chip)
        labels = model.argmax_labels(probs)
        (out / f"{cid}.png").write_bytes(core.encode_label_raster(labels))
        if probs_out:
            probs_dir = Path(probs_out)
            probs_dir.mkdir(parents=True, exist_ok=True)
            (probs_dir / f"{cid}.oemp").write_bytes(core.encode_prob_raster(probs))
            manifest_lines.append(json.dumps({"chip_id": cid, "oemp_path": f"{cid}.oemp"}))
    if probs_out and manifest_lines:
        (Path(probs_out) / "manifest.jsonl").write_text(
            "\n".join(manifest_lines) + "\n", encoding="utf-8"
        )
    _emit({"predicted": len(chosen), "out": str(out)})


@main.command()
@click.option("--world", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--params", "params_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--probs-manifest", type=click.Path(exists=True, dir_okay=False), default=None,
              help="External OEMP manifest instead of a trained model.")
@click.option("--k", default=2, show_default=True, help="Candidates per stratification cell.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_common
@_fail_on_error
def select(world, params_path, probs_manifest, k, out, seed, config):
    """Score unlabeled chips by entropy and pick the top k per cell."""
    if (params_path is None) == (probs_manifest is None):
        raise click.ClickException("provide exactly one of --params / --probs-manifest")
    _, records, chosen = _world_chips(world, ())
    params = model.load_params(params_path) if params_path else None
    candidates = []
    for cid in chosen:
        rec = records[cid]
        chip = synth.load_world_chip(world, rec)
        if params is not None:
            probs = model.predict_probs(params, chip)
        else:
            probs = model.load_external_probs(probs_manifest, chip)
        candidates.append(
            selection.Candidate(
                chip_id=cid,
                cell_id=rec["cell_id"],
                entropy=selection.chip_entropy(probs),
                source="entropy",
                rgb_path=rec["rgb_path"],
            )
        )
    selected = selection.stratified_topk(candidates, k)
    selection.save_selection_report(selected, out)
    _emit(
        {
            "selection": str(out),
            "selected": [
                {"cell_id": c.cell_id, "chip_id": c.chip_id, "entropy": c.entropy, "source": c.source}
                for c in selected
            ],
        }
    )


@main.command()
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--truth", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--ignore-index", default=0, show_default=True)
@click.option("--matrix-csv", type=click.Path(dir_okay=False), default=None,
              help="Write the normalized confusion matrix here.")
@_common
@_fail_on_error
def evaluate(pred, truth, ignore_index, matrix_csv, seed, config):
    """Accuracy report of a predicted label PNG against ground truth."""
    cm = metrics.accumulate_confusion(
        _label_png(pred), _label_png(truth), ignore_index=ignore_index
    )
    report = metrics.compute_metrics(cm)
    if matrix_csv:
        Path(matrix_csv).write_text(metrics.normalized_confusion_csv(cm), encoding="utf-8")
    _emit(report.to_dict())


@main.command("ref-eval")
@click.option("--pred", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--footprints", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--target-class", required=True,
              help="Class name or index evaluated against the footprints.")
@click.option("--geo", required=True, help="origin_lon,origin_lat,pixel_size_x,pixel_size_y")
@click.option("--min-area", default=0.0, show_default=True, help="Minimum footprint area in m^2.")
@click.option("--class-role", default="building", show_default=True,
              type=click.Choice(refeval.CLASS_ROLES))
@click.option("--error-out", type=click.Path(dir_okay=False), default=None)
@_common
@_fail_on_error
def ref_eval(pred, footprints, target_class, geo, min_area, class_role, error_out, seed, config):
    """Binary evaluation of one class against reference footprints."""
    labels = _label_png(pred)
    try:
        target = int(target_class)
    except ValueError:
        if target_class not in core.CLASS_NAMES:
            raise click.ClickException(f"unknown class {target_class!r}")
        target = core.CLASS_NAMES.index(target_class)
    fs = refeval.parse_footprints(Path(footprints).read_bytes(), class_role)
    fs = refeval.filter_min_area(fs, min_area)
    transform = _parse_geo(geo)
    mask, skipped = refeval.rasterize_polygons(fs, transform, labels.width, labels.height)
    result = refeval.evaluate_binary(labels, target, mask)
    if error_out:
        Path(error_out).write_bytes(refeval.error_map_png(result.error))
    doc = result.to_dict()
    doc["skipped_rings"] = skipped
    doc["polygons"] = len(fs.polygons)
    _emit(doc)


@main.command("tiles")
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--world", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--predictions", type=click.Path(exists=True, file_okay=False), default=None,
              help="Prediction PNGs for the prediction layer (world mode).")
@click.option("--labels", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Single label raster to tile instead of a world.")
@click.option("--geo", default=None, help="GeoTransform for --labels.")
@click.option("--zmin", required=True, type=int)
@click.option("--zmax", required=True, type=int)
@click.option("--tile-size", default=256, show_default=True)
@click.option("--opacity", default=0.3, show_default=True)
@_common
@_fail_on_error
def tiles_cmd(out, world, predictions, labels, geo, zmin, zmax, tile_size, opacity, seed, config):
    """Build XYZ tile pyramids ({z}/{x}/{y}.png)."""
    if world is not None:
        counts = loop.build_world_tiles(
            world, out, zmin, zmax, predictions_dir=predictions,
            opacity=opacity, tile_size=tile_size,
        )
        _emit({"out": str(out), **counts})
    elif labels is not None:
        if geo is None:
            raise click.ClickException("--labels requires --geo")
        raster = core.LabelRaster(_label_png(labels).data, geo=_parse_geo(geo))
        pyramid = tiles.build_pyramid(raster, zmin, zmax, tile_size)
        n = tiles.write_pyramid(pyramid, out)
        _emit({"out": str(out), "prediction": n})
    else:
        raise click.ClickException("provide --world or --labels")


@main.command()
@click.option("--host", default=None, help="Override the configured listen host.")
@click.option("--port", default=None, type=int, help="Override the configured listen port.")
@_common
@_fail_on_error
def serve(host, port, seed, config):
    """Run the HTTP review service (--config is the service config file)."""
    if config is None:
        raise click.ClickException("serve requires --config pointing at the service config")
    cfg = load_service_config(config)
    if host or port:
        cur_host, _, cur_port = cfg.listen_address.partition(":")
        cfg = dataclasses.replace(
            cfg, listen_address=f"{host or cur_host}:{port or cur_port or 8008}"
        )
    _emit({"listening": cfg.listen_address})
    service_app.run(cfg)


@main.command("loop")
@click.option("--state", required=True, type=click.Path(file_okay=False))
@click.option("--world", type=click.Path(exists=True, file_okay=False), default=None,
              help="World root (defaults to STATE/world).")
@click.option("--iterations", default=None, type=int)
@_common
@_fail_on_error
def loop_cmd(state, world, iterations, seed, config):
    """Run full train->map->review->retrain cycles with the scripted reviewer."""
    cfg_doc = _load_config(config)
    if seed is not None:
        cfg_doc["seed"] = seed
    if iterations is not None:
        cfg_doc["iterations"] = iterations
    if "ratios" in cfg_doc:
        cfg_doc["ratios"] = tuple(cfg_doc["ratios"])
    cfg = loop.LoopConfig(**cfg_doc)
    Path(state).mkdir(parents=True, exist_ok=True)
    reports = loop.run_loop(state, cfg, world_root=world)
    for rep in reports:
        click.echo(rep.to_json())


if __name__ == "__main__":
    sys.exit(main())
