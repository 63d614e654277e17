"""Acceptance suite: one test per release criterion.

Run with `pytest tests/test_acceptance.py -s -v` to see the PASS lines and
per-criterion timings. The suite needs no trained weights: it uses the
deterministic blur network plus committed random-weight fixtures.
"""

import json
import os
import sys
import time

import numpy as np
import pytest

from drc.bsdf import build_frame
from drc.cache import entry_weight, render_drc
from drc.cnn import (batchnorm_infer, conv2d, forward, make_blur_network,
                     gaussian_blur, upsample_bilinear2x2, zero_network)
from drc.geometry import Ray, intersect, intersect_batch
from drc.hemimap import (HemiMap, direction_to_texel, luminance,
                         texel_to_direction)
from drc.integrators import (RenderConfig, find_primary_intersection, render,
                             shade_indirect)
from drc.metrics import png_size_proxy, ssim
from drc.imageio import tonemap
from drc.sampler import Sampler
from drc.scene import load_scene, parse_scene

from conftest import make_scene, scene_path

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


def report(name, detail=""):
    print(f"\nACCEPTANCE PASS: {name}" + (f"  [{detail}]" if detail else ""),
          file=sys.stderr)


# ---------------------------------------------------------------------------

def test_furnace_property():
    # convex diffuse body (albedo 0.5) in a unit environment -> 0.5 +- 2%
    # at 1024 spp, 64x64, in under two minutes
    scene = make_scene(environment=[1.0, 1.0, 1.0], name="furnace")
    t0 = time.time()
    img, _ = render(scene, RenderConfig(spp=1024, seed=0, threads=1), mode="pt")
    elapsed = time.time() - t0
    window = img[24:40, 24:40]  # central pixels, fully inside the silhouette
    mean = window.mean(axis=(0, 1))
    assert elapsed < 120.0
    for c in range(3):
        assert mean[c] == pytest.approx(0.5, rel=0.02)
    report("furnace property", f"mean={mean[0]:.5f} in {elapsed:.0f}s")


def test_bvh_equals_linear_scan():
    rng = np.random.default_rng(42)
    shapes = []
    for _ in range(60):
        shapes.append({"type": "sphere", "center": list(rng.uniform(-5, 5, 3)),
                       "radius": float(rng.uniform(0.1, 1.0)), "material": "gray"})
    for _ in range(40):
        shapes.append({"type": "quad", "corner": list(rng.uniform(-5, 5, 3)),
                       "edge_u": list(rng.uniform(-2, 2, 3)),
                       "edge_v": list(rng.uniform(-2, 2, 3)), "material": "gray"})
    scene = make_scene(shapes=shapes)
    n = 10_000
    origins = rng.uniform(-8, 8, (n, 3))
    dirs = rng.normal(size=(n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    linear = intersect_batch(scene.geometry, origins, dirs)
    hits = 0
    for i in range(n):
        h = intersect(scene, Ray(origins[i], dirs[i]))
        if linear["hit"][i]:
            assert h is not None
            assert h.prim == linear["prim"][i]
            assert h.distance == linear["t"][i]  # exact
            hits += 1
        else:
            assert h is None
    assert hits > 2000
    report("BVH/linear equivalence", f"{hits} hits, 10k rays x 100 shapes, exact")


def test_map_codec_round_trip():
    frame = build_frame(np.array([0.2, 0.9, 0.38]) / np.linalg.norm([0.2, 0.9, 0.38]),
                        np.array([0.0, 1.0, 0.0]))
    for v in range(32):
        for u in range(32):
            d = texel_to_direction(u, v, frame)
            assert direction_to_texel(d, frame) == (u, v)
    report("map codec round trip", "all 1024 texels exact")


def test_shade_indirect_against_bruteforce():
    scene = make_scene(environment=[1.0, 1.0, 1.0], name="furnace")
    res = find_primary_intersection(
        scene, Ray(np.array([0.0, 0.0, -5.0]), np.array([0.0, 0.0, 1.0])))
    hit = res["hit"]
    frame = build_frame(hit.normal, scene.global_up)
    wo = -res["direction"]

    # constant map: integral is albedo * c
    c = 2.0
    m = HemiMap(np.full((32, 32, 3), c), frame)
    vals = [shade_indirect(scene, hit, m, frame, wo, Sampler(seed=9), 64, key=k)
            for k in range(32)]
    est = float(np.mean([v[0] for v in vals]))
    assert est == pytest.approx(0.5 * c, rel=0.03)

    # single bright texel vs a pure-BSDF-sampling oracle
    data = np.zeros((32, 32, 3))
    data[5, 7] = 4.0
    m = HemiMap(data, frame)
    rng = np.random.default_rng(1)
    side = 4000
    total = 0.0
    for band in range(0, side, 500):
        rows = np.arange(band, min(band + 500, side))
        u1 = (rows[:, None] + rng.random((len(rows), side))) / side
        u2 = (np.arange(side)[None, :] + rng.random((len(rows), side))) / side
        theta = np.arccos(np.sqrt(1 - u1.ravel()))
        fi = 2 * np.pi * u2.ravel()
        tu = np.minimum((fi / (2 * np.pi) * 32).astype(int), 31)
        tv = np.minimum((theta / (np.pi / 2) * 32).astype(int), 31)
        total += data[tv, tu, 0].sum()
    oracle = 0.5 * total / (side * side)
    vals = [shade_indirect(scene, hit, m, frame, wo, Sampler(seed=3), 64, key=k)
            for k in range(64)]
    est = float(np.mean([v[0] for v in vals]))
    assert est == pytest.approx(oracle, rel=0.01)
    report("shade_indirect vs brute force",
           f"constant 3%, single texel {abs(est / oracle - 1) * 100:.2f}% vs 1%")


def test_interpolation_weight_suite():
    Z = np.array([0.0, 0.0, 1.0])

    def mk(px, py, normal):
        from drc.cache import CacheEntry

        n = np.asarray(normal, dtype=np.float64)
        return CacheEntry(pixel=(px, py), position=np.zeros(3),
                          normal=n / np.linalg.norm(n),
                          indirect_radiance=np.ones(3),
                          specular_throughput=np.ones(3))

    assert entry_weight(mk(5, 5, Z), (5, 5), Z, 8.0) == pytest.approx(
        2.0 + 1e-4, abs=1e-12)
    assert entry_weight(mk(0, 0, Z), (8, 0), Z, 8.0) == pytest.approx(
        1e-4, abs=1e-15)
    assert entry_weight(mk(0, 0, (1, 0, 0)), (4, 0), Z, 8.0) == pytest.approx(
        0.5 + 1e-4, abs=1e-12)

    rng = np.random.default_rng(0)
    for _ in range(10_000):
        r = rng.uniform(1, 32)
        d1, d2 = np.sort(rng.uniform(0, 2.5 * r, 2))
        c1, c2 = np.sort(rng.uniform(-1, 1, 2))

        def tilted(c):
            s = np.sqrt(1 - c * c)
            return (s, 0.0, c)

        n = tilted(rng.uniform(-1, 1))
        assert entry_weight(mk(0, 0, n), (d1, 0), Z, r) >= \
            entry_weight(mk(0, 0, n), (d2, 0), Z, r) - 1e-12
        d = rng.uniform(0, 2.5 * r)
        assert entry_weight(mk(0, 0, tilted(c2)), (d, 0), Z, r) >= \
            entry_weight(mk(0, 0, tilted(c1)), (d, 0), Z, r) - 1e-12
    report("interpolation weight suite", "3 exact cases + 1e4 monotonicity checks")


def test_cnn_primitive_goldens():
    # hand-computable fixtures at 1e-6
    c = 3.0
    x = np.full((1, 5, 5), c, dtype=np.float32)
    w = np.full((1, 1, 3, 3), 1.0 / 9.0, dtype=np.float32)
    out = conv2d(x, w, np.zeros(1, dtype=np.float32))
    assert abs(out[0, 2, 2] - c) < 1e-6
    assert abs(out[0, 0, 2] - 6 * c / 9) < 1e-6
    assert abs(out[0, 0, 0] - 4 * c / 9) < 1e-6

    up = upsample_bilinear2x2(np.array([[[0.0, 1.0], [0.0, 1.0]]], dtype=np.float32))
    assert np.max(np.abs(up[0, 0] - [0.0, 0.25, 0.75, 1.0])) < 1e-6

    rng = np.random.default_rng(5)
    xx = rng.random((4, 8, 8)).astype(np.float32)
    g = rng.uniform(0.5, 2, 4).astype(np.float32)
    b = rng.normal(size=4).astype(np.float32)
    mn = rng.normal(size=4).astype(np.float32)
    vr = rng.uniform(0.5, 2, 4).astype(np.float32)
    got = batchnorm_infer(xx, g, b, mn, vr)
    ref = (xx - mn[:, None, None]) / np.sqrt(vr[:, None, None] + 1e-5) \
        * g[:, None, None] + b[:, None, None]
    assert np.max(np.abs(got - ref)) < 1e-6

    wconv = (rng.random((5, 4, 3, 3)) / 36.0).astype(np.float32)  # O(1) outputs
    a = np.float32(2.5)
    z5 = np.zeros(5, dtype=np.float32)
    assert np.max(np.abs(conv2d(a * xx, wconv, z5) - a * conv2d(xx, wconv, z5))) < 1e-6

    out = forward(zero_network(k=8), rng.random((7, 32, 32)).astype(np.float32))
    assert np.all(out == 0.0)
    report("CNN primitive goldens", "conv/bn/upsample fixtures at 1e-6; zero net")


def test_determinism_bit_identical():
    from drc.cli import run

    import tempfile

    scene_doc = None
    with open(scene_path("cornell"), "r", encoding="utf-8") as f:
        scene_doc = json.loads(f.read())
    scene_doc["camera"]["resolution"] = [24, 24]
    with tempfile.TemporaryDirectory() as td:
        sp = os.path.join(td, "s.json")
        with open(sp, "w") as f:
            json.dump(scene_doc, f)
        blobs = []
        for i, threads in enumerate(("1", "4", "1")):
            out = os.path.join(td, f"p{i}.pfm")
            assert run(["render", "--scene", sp, "--mode", "pt", "--spp", "8",
                        "--seed", "7", "--threads", threads, "--out", out]) == 0
            with open(out, "rb") as f:
                blobs.append(f.read())
        assert blobs[0] == blobs[1] == blobs[2]
        drc_blobs = []
        for i, threads in enumerate(("1", "3")):
            out = os.path.join(td, f"d{i}.pfm")
            assert run(["render", "--scene", sp, "--mode", "drc",
                        "--weights", os.path.join(GOLDEN, "weights_k8.drcw"),
                        "--indirect-tasks", "2", "--direct-spp", "2",
                        "--seed", "7", "--threads", threads, "--out", out]) == 0
            with open(out, "rb") as f:
                drc_blobs.append(f.read())
        assert drc_blobs[0] == drc_blobs[1]
    report("determinism", "pt + drc bit-identical across runs and worker counts")


def _map_pairs(n_target=200):
    """(raw 1-spp, reference) normalized map pairs from a cheap interior."""
    from drc.dataset import generate_examples

    scene = make_scene(
        shapes=[
            {"type": "quad", "corner": [-2, 0, -2], "edge_u": [4, 0, 0],
             "edge_v": [0, 0, 4], "material": "white"},
            {"type": "quad", "corner": [-2, 0, 2], "edge_u": [4, 0, 0],
             "edge_v": [0, 3, 0], "material": "blue"},
            {"type": "quad", "corner": [-2, 0, -2], "edge_u": [0, 3, 0],
             "edge_v": [0, 0, 4], "material": "red"},
            {"type": "quad", "corner": [2, 0, -2], "edge_u": [0, 0, 4],
             "edge_v": [0, 3, 0], "material": "white"},
            {"type": "quad", "corner": [-2, 3, -2], "edge_u": [0, 0, 4],
             "edge_v": [4, 0, 0], "material": "white"},
            {"type": "sphere", "center": [0.5, 0.6, 0.4], "radius": 0.6,
             "material": "white"},
            {"type": "quad", "corner": [-0.5, 2.9, -0.5], "edge_u": [1.0, 0, 0],
             "edge_v": [0, 0, 1.0], "material": "lamp"},
        ],
        materials={
            "white": {"kind": "diffuse", "albedo": [0.72, 0.72, 0.72]},
            "red": {"kind": "diffuse", "albedo": [0.65, 0.12, 0.1]},
            "blue": {"kind": "diffuse", "albedo": [0.2, 0.3, 0.65]},
            "lamp": {"kind": "diffuse", "albedo": [0.5, 0.5, 0.5],
                     "emission": [12.0, 12.0, 12.0]},
        },
        camera={"position": [0, 1.6, -1.9], "look_at": [0, 1.0, 2.0],
                "up": [0, 1, 0], "fov": 55.0, "resolution": [64, 64]},
        name="mapbox",
    )
    side = int(np.ceil(np.sqrt(n_target)))
    cfg = RenderConfig(max_path_depth=5)
    return generate_examples(scene, (side + 1, side), ref_spp=256, seed=4,
                             config=cfg)


def _map_ssim(a, b):
    # maps are mean-luminance normalized; a bounded tonemap keeps SSIM in range
    ta = a / (1.0 + a)
    tb = b / (1.0 + b)
    return ssim(np.moveaxis(ta, 0, -1), np.moveaxis(tb, 0, -1))


def test_gaussian_blur_baseline():
    examples = _map_pairs(200)
    assert len(examples) >= 200
    raw_scores, blur_scores = [], []
    for e in examples:
        raw = e.input[0:3].astype(np.float64)
        ref = e.target.astype(np.float64)
        blurred = np.stack([
            gaussian_blur(HemiMap(raw[c], None), 1.0).data for c in range(3)])
        raw_scores.append(_map_ssim(raw, ref))
        blur_scores.append(_map_ssim(blurred, ref))
    raw_mean = float(np.mean(raw_scores))
    blur_mean = float(np.mean(blur_scores))
    assert blur_mean > raw_mean
    report("Gaussian-blur baseline",
           f"SSIM blur {blur_mean:.4f} > raw {raw_mean:.4f} over {len(examples)} pairs")


def test_task_budget_trend():
    # interior corpus scene at 128x128: SSIM vs a 2048-spp reference is
    # non-decreasing over task budgets {1,2,4,8,16}; at 16 tasks the PNG
    # noise proxy beats a same-wall-time path traced frame
    suite_start = time.time()
    scene = load_scene(scene_path("room"))
    assert scene.camera.resolution == (128, 128)
    net = make_blur_network(k=16)
    budgets = [1, 2, 4, 8, 16]

    t0 = time.time()
    drc_img, tel = render_drc(
        scene, RenderConfig(indirect_tasks=16, direct_spp=8, mis_samples=16,
                            seed=0, threads=1), net, snapshots=budgets)
    drc_seconds = time.time() - t0
    snaps = tel["snapshots"]

    t0 = time.time()
    ref, _ = render(scene, RenderConfig(spp=2048, seed=1, threads=1), mode="pt")
    ref_seconds = time.time() - t0
    print(f"\nreference 2048 spp: {ref_seconds:.0f}s, drc sweep: {drc_seconds:.0f}s",
          file=sys.stderr)

    ref_tm = tonemap(ref) / 255.0
    scores = []
    for b in budgets:
        s = ssim(tonemap(snaps[b]) / 255.0, ref_tm)
        scores.append(s)
        print(f"tasks={b}: ssim={s:.4f}", file=sys.stderr)
    for a, b in zip(scores, scores[1:]):
        assert b >= a - 1e-9

    # same-wall-time path tracing comparison on the PNG proxy
    probe_spp = 16
    t0 = time.time()
    pt_probe, _ = render(scene, RenderConfig(spp=probe_spp, seed=2, threads=1),
                         mode="pt")
    probe_seconds = time.time() - t0
    match_spp = max(probe_spp, int(probe_spp * drc_seconds / probe_seconds))
    if match_spp > probe_spp:
        pt_match, _ = render(scene, RenderConfig(spp=match_spp, seed=2, threads=1),
                             mode="pt")
    else:
        pt_match = pt_probe
    png_drc = png_size_proxy(tonemap(drc_img))
    png_pt = png_size_proxy(tonemap(pt_match))
    print(f"png proxy: drc@16={png_drc} vs pt@{match_spp}spp={png_pt}",
          file=sys.stderr)
    assert png_drc < png_pt

    total = time.time() - suite_start
    assert total <= 1800.0
    report("task-budget trend",
           f"ssim {scores[0]:.3f}->{scores[-1]:.3f}, png {png_drc}<{png_pt}, "
           f"{total:.0f}s total")
