import json
import os

import numpy as np
import pytest

from drc.cli import run
from drc.imageio import read_pfm

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")
SCENES = os.path.join(os.path.dirname(__file__), "..", "scenes")


@pytest.fixture
def small_scene(tmp_path, cornell_scene):
    doc = cornell_scene.to_dict()
    doc["camera"]["resolution"] = [24, 24]
    path = tmp_path / "small.json"
    path.write_text(json.dumps(doc))
    return str(path)


def test_render_pt_smoke(tmp_path, small_scene, capsys):
    out = tmp_path / "a.pfm"
    rc = run(["render", "--scene", small_scene, "--mode", "pt", "--spp", "4",
              "--out", str(out)])
    assert rc == 0
    img = read_pfm(out)
    assert img.shape == (24, 24, 3)
    assert np.all(np.isfinite(img))


def test_render_drc_requires_weights(small_scene, tmp_path, capsys):
    rc = run(["render", "--scene", small_scene, "--mode", "drc",
              "--out", str(tmp_path / "x.pfm")])
    assert rc == 1
    assert "--weights" in capsys.readouterr().err


def test_render_missing_scene_is_io_error(tmp_path):
    rc = run(["render", "--scene", str(tmp_path / "nope.json"),
              "--out", str(tmp_path / "x.pfm")])
    assert rc == 2


def test_render_invalid_scene_is_validation_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    rc = run(["render", "--scene", str(bad), "--out", str(tmp_path / "x.pfm")])
    assert rc == 3


def test_render_png_output(tmp_path, small_scene):
    out = tmp_path / "a.png"
    rc = run(["render", "--scene", small_scene, "--mode", "direct",
              "--direct-spp", "2", "--exposure", "1.5", "--out", str(out)])
    assert rc == 0
    assert out.read_bytes().startswith(b"\x89PNG")


def test_render_deterministic_across_runs_and_threads(tmp_path, small_scene):
    outs = []
    for threads in ("1", "4", "1"):
        out = tmp_path / f"t{len(outs)}.pfm"
        rc = run(["render", "--scene", small_scene, "--mode", "pt", "--spp", "4",
                  "--seed", "9", "--threads", threads, "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1] == outs[2]


def test_render_drc_deterministic(tmp_path, small_scene):
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"drc{threads}.pfm"
        rc = run(["render", "--scene", small_scene, "--mode", "drc",
                  "--weights", os.path.join(GOLDEN, "weights_k8.drcw"),
                  "--indirect-tasks", "2", "--direct-spp", "2", "--seed", "3",
                  "--threads", threads, "--out", str(out)])
        assert rc == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_infer_reproduces_golden(tmp_path):
    out = tmp_path / "pred.pfm"
    rc = run(["infer", "--weights", os.path.join(GOLDEN, "weights_k8.drcw"),
              "--input", os.path.join(GOLDEN, "stacks.drcd"),
              "--index", "1", "--out", str(out)])
    assert rc == 0
    got = read_pfm(out)
    ref = read_pfm(os.path.join(GOLDEN, "pred_idx1.pfm"))
    assert np.array_equal(got, ref)


def test_infer_index_out_of_range(tmp_path):
    rc = run(["infer", "--weights", os.path.join(GOLDEN, "weights_k8.drcw"),
              "--input", os.path.join(GOLDEN, "stacks.drcd"),
              "--index", "99", "--out", str(tmp_path / "x.pfm")])
    assert rc == 1


def test_eval_machine_record(tmp_path, small_scene, capsys):
    a = tmp_path / "a.pfm"
    b = tmp_path / "b.pfm"
    run(["render", "--scene", small_scene, "--mode", "direct", "--direct-spp",
         "2", "--seed", "1", "--out", str(a)])
    run(["render", "--scene", small_scene, "--mode", "direct", "--direct-spp",
         "2", "--seed", "2", "--out", str(b)])
    capsys.readouterr()
    rc = run(["eval", "--ref", str(a), "--test", str(b),
              "--metrics", "l1,pngsize"])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    fields = dict(kv.split("=") for kv in line.split())
    assert set(fields) == {"l1", "pngsize_ref", "pngsize_test"}
    assert float(fields["l1"]) >= 0


def test_eval_ssim_needs_window(tmp_path, small_scene, capsys):
    a = tmp_path / "a.pfm"
    run(["render", "--scene", small_scene, "--mode", "direct", "--direct-spp",
         "1", "--out", str(a)])
    rc = run(["eval", "--ref", str(a), "--test", str(a), "--metrics", "ssim"])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("ssim=1")


def test_dataset_and_cachedump_flow(tmp_path, small_scene):
    data = tmp_path / "d.drcd"
    rc = run(["dataset", "--scene", small_scene, "--grid", "2x2",
              "--ref-spp", "256", "--max-depth", "4", "--out", str(data)])
    assert rc == 0
    from drc.dataset import read_dataset

    assert len(read_dataset(str(data))) >= 1

    img = tmp_path / "r.pfm"
    dump = tmp_path / "c.drcc"
    rc = run(["render", "--scene", small_scene, "--mode", "drc",
              "--weights", os.path.join(GOLDEN, "weights_k8.drcw"),
              "--indirect-tasks", "1", "--direct-spp", "1",
              "--cache-out", str(dump), "--out", str(img)])
    assert rc == 0
    txt = tmp_path / "c.csv"
    rc = run(["cachedump", "--in", str(dump), "--out", str(txt)])
    assert rc == 0
    lines = txt.read_text().strip().splitlines()
    assert lines[0].startswith("x,y,")
    assert len(lines) > 1


def test_interrupt_equals_clean_pass_run(small_scene):
    # an interrupt that fires immediately finalizes pass 0: identical to a
    # clean run with --passes 1
    from drc.cnn import load_weights
    from drc.integrators import RenderConfig, render
    from drc.scene import load_scene

    scene = load_scene(small_scene)
    net = load_weights(os.path.join(GOLDEN, "weights_k8.drcw"))
    cfg = dict(direct_spp=1, seed=2, threads=1, mis_samples=8)
    interrupted, _ = render(scene, RenderConfig(passes=4, **cfg), mode="drc",
                            weights=net, interrupt=lambda: True)
    clean, _ = render(scene, RenderConfig(passes=1, **cfg), mode="drc",
                      weights=net)
    assert np.array_equal(interrupted, clean)
