#!/usr/bin/env python3
"""Generate the desk-scale training dataset from the corpus scenes.

Walks a 24x24 camera-ray grid over each corpus scene (2300+ examples in
total) with 256-spp ground-truth maps and writes trainer/data/desk.drcd.
Single-CPU runtime is about an hour; the file is cached and reused by the
trainer acceptance tests.
"""

import os
import sys
import time

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "..")
sys.path.insert(0, os.path.join(ROOT, "src"))

DEFAULT_OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)),
                           "..", "data", "desk.drcd")

SCENES = ("cornell", "glossybox", "room", "cornell_teal")
GRID = (24, 24)
REF_SPP = 256


def build(out_path=DEFAULT_OUT, grid=GRID, ref_spp=REF_SPP, log=print):
    from drc.dataset import generate_examples, write_dataset
    from drc.integrators import RenderConfig
    from drc.scene import load_scene

    os.makedirs(os.path.dirname(out_path), exist_ok=True)
    cfg = RenderConfig(max_path_depth=5)
    all_examples = []
    for i, name in enumerate(SCENES):
        scene = load_scene(os.path.join(ROOT, "scenes", f"{name}.json"))
        t0 = time.time()
        examples = generate_examples(scene, grid, ref_spp=ref_spp,
                                     seed=1000 * i, config=cfg)
        all_examples.extend(examples)
        log(f"{name}: {len(examples)} examples in {time.time() - t0:.0f}s "
            f"({len(all_examples)} total)")
    write_dataset(all_examples, out_path)
    log(f"wrote {len(all_examples)} examples to {out_path}")
    return out_path


if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else DEFAULT_OUT
    build(out)
