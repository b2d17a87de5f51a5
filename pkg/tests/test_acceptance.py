"""Acceptance suite: every release criterion at its stated tolerance.

Run with `pytest tests/test_acceptance.py -s` to see one pass/fail line per
criterion.
"""

import functools
import math
import time
from fractions import Fraction

import numpy as np
from fastapi.testclient import TestClient

from landloop.core import GeoTransform, LabelRaster, ProbRaster
from landloop.loop import LoopConfig, run_loop
from landloop.metrics import accumulate_confusion, compute_metrics, error_map
from landloop.model import softmax_cross_entropy
from landloop.refeval import FootprintSet, Polygon, rasterize_polygons
from landloop.selection import Candidate, assign_splits, chip_entropy, stratified_topk
from landloop.service import ServiceConfig, create_app
from landloop.selection import save_selection_report
from landloop.synth import generate_world, write_world
from landloop.tiles import TileAddress, build_pyramid, lonlat_to_tile, tile_bounds


def criterion(name):
    def deco(f):
        @functools.wraps(f)
        def wrapper(*args, **kwargs):
            try:
                f(*args, **kwargs)
            except BaseException:
                print(f"[FAIL] {name}")
                raise
            print(f"[PASS] {name}")

        return wrapper

    return deco


# --- criterion 1: metrics against an independent brute-force counter -------


def brute_force_report(pred, truth, k=9, ignore=0):
    """Per-pixel counting oracle, kept free of the metrics module."""
    tp = [0] * k
    fn = [0] * k
    fp = [0] * k
    for t, p in zip(truth.data.ravel().tolist(), pred.data.ravel().tolist()):
        if t == ignore:
            continue
        if t == p:
            tp[t] += 1
        else:
            fn[t] += 1
            fp[p] += 1
    pa = [Fraction(tp[c], tp[c] + fn[c]) if tp[c] + fn[c] else None for c in range(k)]
    iou = [
        Fraction(tp[c], tp[c] + fn[c] + fp[c]) if tp[c] + fn[c] + fp[c] else None
        for c in range(k)
    ]
    def mean(vals):
        vals = [v for v in vals if v is not None]
        return sum(vals) / len(vals) if vals else None
    total = sum(tp) + sum(fn)
    oa = Fraction(sum(tp), total) if total else None
    return pa, mean(pa), oa, iou, mean(iou)


@criterion("metrics oracle equivalence (200 randomized rasters, exact)")
def test_metrics_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    for _ in range(200):
        h = int(rng.integers(1, 65))
        w = int(rng.integers(1, 65))
        truth = LabelRaster(rng.integers(0, 9, size=(h, w), dtype=np.uint8))
        pred = LabelRaster(rng.integers(0, 9, size=(h, w), dtype=np.uint8))
        report = compute_metrics(accumulate_confusion(pred, truth))
        pa, aa, oa, iou, miou = brute_force_report(pred, truth)
        assert report.pa == tuple(None if v is None else float(v) for v in pa)
        assert report.iou == tuple(None if v is None else float(v) for v in iou)
        assert report.aa == (None if aa is None else float(aa))
        assert report.oa == (None if oa is None else float(oa))
        assert report.miou == (None if miou is None else float(miou))
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0, f"took {elapsed:.2f}s, budget is 5s"


@criterion("hand-worked metrics example (PA/AA/OA/IoU/mIoU exact)")
def test_hand_worked_example():
    truth = LabelRaster(np.array([[1, 1, 2, 2]], dtype=np.uint8))
    pred = LabelRaster(np.array([[1, 2, 2, 2]], dtype=np.uint8))
    report = compute_metrics(accumulate_confusion(pred, truth))
    assert report.pa[1] == 0.5
    assert report.pa[2] == 1.0
    assert report.aa == 0.75
    assert report.oa == 0.75
    assert report.iou[1] == 0.5
    assert report.iou[2] == float(Fraction(2, 3))
    assert report.miou == float(Fraction(7, 12))


# --- criterion 2: gradient check -------------------------------------------


@criterion("gradient check (50 cases, central differences, 1e-5 relative)")
def test_gradient_check():
    rng = np.random.default_rng(99)
    h = 1e-5
    for _ in range(50):
        n = int(rng.integers(2, 9))
        k = int(rng.integers(2, 9))
        logits = rng.normal(0.0, 2.0, size=(n, k))
        labels = rng.integers(0, k, size=n)
        _, grad = softmax_cross_entropy(logits, labels)
        fd = np.zeros_like(logits)
        for i in range(n):
            for j in range(k):
                up = logits.copy()
                up[i, j] += h
                dn = logits.copy()
                dn[i, j] -= h
                fd[i, j] = (
                    softmax_cross_entropy(up, labels)[0]
                    - softmax_cross_entropy(dn, labels)[0]
                ) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(grad) + np.abs(fd), 1e-8)
        assert rel.max() < 1e-5


# --- criterion 3: closed-loop improvement ----------------------------------


@criterion("closed-loop improvement (3 seeds: shifted OA +10pts, overall +5pts)")
def test_closed_loop_improvement(tmp_path_factory):
    start = time.perf_counter()
    for seed in (3, 4, 9):
        state = tmp_path_factory.mktemp(f"loop_seed{seed}")
        chips = generate_world(8, 4, 0.5, seed=seed, chip_size=64)
        write_world(chips, state / "world", seed=seed)
        r0, r1 = run_loop(state, LoopConfig(seed=seed, epochs=40), iterations=2)
        shifted0 = r0.test_oa_by_tag["shifted"]
        shifted1 = r1.test_oa_by_tag["shifted"]
        assert shifted1 - shifted0 >= 0.10, (
            f"seed {seed}: shifted OA {shifted0:.3f} -> {shifted1:.3f}"
        )
        assert r1.test_oa - r0.test_oa >= 0.05, (
            f"seed {seed}: overall OA {r0.test_oa:.3f} -> {r1.test_oa:.3f}"
        )
    elapsed = time.perf_counter() - start
    assert elapsed < 180.0, f"took {elapsed:.1f}s, budget is 3 minutes"


# --- criterion 4: entropy scoring and stratified selection -----------------


@criterion("entropy exact values and stratified top-k contract")
def test_entropy_and_selection():
    uniform = ProbRaster(np.full((8, 16, 16), 0.125, dtype=np.float32))
    assert chip_entropy(uniform) == 1.0
    onehot = np.zeros((8, 16, 16), dtype=np.float32)
    onehot[2] = 1.0
    assert chip_entropy(ProbRaster(onehot)) == 0.0
    half = np.zeros((8, 16, 16), dtype=np.float32)
    half[0] = 0.5
    half[1] = 0.5
    assert chip_entropy(ProbRaster(half)) == 1 / 3

    cands = [
        Candidate("a1", "A", 0.9),
        Candidate("a2", "A", 0.5),
        Candidate("a3", "A", 0.1),
        Candidate("b1", "B", 0.7),
    ]
    out = stratified_topk(cands, 2)
    per_cell = {}
    for c in out:
        per_cell.setdefault(c.cell_id, []).append(c.chip_id)
    assert per_cell == {"A": ["a1", "a2"], "B": ["b1"]}
    tied = [Candidate(f"t{i}", "C", 0.5) for i in (4, 2, 3, 1)]
    assert [c.chip_id for c in stratified_topk(tied, 2)] == ["t1", "t2"]


# --- criterion 5: tile math -------------------------------------------------


@criterion("tile math (Tokyo z10, 1000-tile round trip, pyramid determinism)")
def test_tile_math():
    t = lonlat_to_tile(139.7670, 35.6814, 10)
    assert (t.x, t.y) == (909, 403)

    rng = np.random.default_rng(7)
    for _ in range(1000):
        z = int(rng.integers(0, 20))
        addr = TileAddress(z, int(rng.integers(0, 2**z)), int(rng.integers(0, 2**z)))
        lon_min, lat_min, lon_max, lat_max = tile_bounds(addr)
        back = lonlat_to_tile((lon_min + lon_max) / 2, (lat_min + lat_max) / 2, z)
        assert (back.x, back.y) == (addr.x, addr.y)

    geo = GeoTransform(0.35, 0.65, 1e-3, -1e-3)
    labels = LabelRaster(
        np.random.default_rng(0).integers(0, 9, size=(64, 64), dtype=np.uint8), geo=geo
    )
    assert build_pyramid(labels, 8, 10) == build_pyramid(labels, 8, 10)


# --- criterion 6: rasterization oracle --------------------------------------


def pip_oracle(xc, yc, rings):
    crossings = 0
    for ring in rings:
        for (x1, y1), (x2, y2) in zip(ring, ring[1:]):
            if (y1 <= yc < y2) or (y2 <= yc < y1):
                if xc < x1 + (yc - y1) / (y2 - y1) * (x2 - x1):
                    crossings += 1
    return crossings % 2 == 1


@criterion("rasterization equals brute-force point-in-polygon (100 polygons)")
def test_rasterization_oracle():
    rng = np.random.default_rng(31)
    for _ in range(100):
        w = int(rng.integers(4, 65))
        h = int(rng.integers(4, 65))
        geo = GeoTransform(0.0, float(h), 1.0, -1.0)
        n = int(rng.integers(3, 13))
        angles = np.sort(rng.uniform(0, 2 * math.pi, size=n))
        radii = rng.uniform(0.2, 1.0, size=n) * min(w, h) / 2
        pts = [
            (w / 2 + r * math.cos(a), h / 2 + r * math.sin(a))
            for a, r in zip(angles, radii)
        ]
        poly = Polygon(outer=tuple(pts + [pts[0]]))
        fs = FootprintSet((poly,), "building")
        mask, _ = rasterize_polygons(fs, geo, w, h)
        for row in range(h):
            yc = geo.origin_lat + (row + 0.5) * geo.pixel_size_y
            for col in range(w):
                xc = geo.origin_lon + (col + 0.5) * geo.pixel_size_x
                assert mask[row, col] == pip_oracle(xc, yc, [poly.outer])


# --- criterion 7: error map contract ----------------------------------------


@criterion("error map renders exactly white/black/red/green")
def test_error_map_contract():
    pred = np.array([[1, 1, 0, 0]])
    truth = np.array([[1, 0, 0, 1]])
    rgb = error_map(pred, truth).to_rgb()
    assert tuple(rgb[0, 0]) == (255, 255, 255)  # TP white
    assert tuple(rgb[0, 1]) == (255, 0, 0)  # FP red
    assert tuple(rgb[0, 2]) == (0, 0, 0)  # TN black
    assert tuple(rgb[0, 3]) == (0, 255, 0)  # FN green


# --- criterion 8: split reproduction ----------------------------------------


@criterion("split of 332 ids at (0.60,0.10,0.30) reproduces 199/33/100")
def test_split_reproduction():
    ids = {f"img{i:04d}" for i in range(332)}
    splits = assign_splits(ids, (0.60, 0.10, 0.30), seed=123)
    assert (len(splits.train), len(splits.val), len(splits.test)) == (199, 33, 100)
    assert set(splits.train) | set(splits.val) | set(splits.test) == ids


# --- criterion 9: service log replay ----------------------------------------


@criterion("service replays 100 decisions identically after restart")
def test_service_log_replay(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("svc")
    cands = [
        Candidate(f"c{i:03d}", f"{i % 5}_0", float((i * 37 % 100) / 100)) for i in range(30)
    ]
    sel = tmp / "selection.json"
    save_selection_report(cands, sel)
    config = ServiceConfig(
        candidates_path=str(sel), log_path=str(tmp / "decisions.log")
    )
    client = TestClient(create_app(config))
    rng = np.random.default_rng(55)
    for _ in range(100):
        cid = f"c{int(rng.integers(0, 30)):03d}"
        decision = ("failure", "clean")[int(rng.integers(0, 2))]
        resp = client.post(
            "/api/decisions",
            json={"candidate_id": cid, "decision": decision, "annotator": "robot"},
        )
        assert resp.status_code == 200
    page_before = client.get("/api/candidates", params={"limit": 30}).json()
    export_before = client.get("/api/export/annotations").content

    restarted = TestClient(create_app(config))
    page_after = restarted.get("/api/candidates", params={"limit": 30}).json()
    export_after = restarted.get("/api/export/annotations").content
    assert page_after == page_before
    assert export_after == export_before
    assert restarted.get("/api/export/annotations").content == export_after
