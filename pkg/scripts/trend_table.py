#!/usr/bin/env python3
"""Task-budget sweep on the room scene: SSIM against a high-spp reference
and the PNG noise proxy, printed as a table.

    python3 scripts/trend_table.py [--weights w.drcw] [--ref-spp 2048]
"""

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--scene", default=os.path.join(
        os.path.dirname(__file__), "..", "scenes", "room.json"))
    p.add_argument("--weights", help="DRCW weights (default: blur network)")
    p.add_argument("--ref-spp", type=int, default=2048)
    p.add_argument("--budgets", default="1,2,4,8,16")
    p.add_argument("--direct-spp", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()

    from drc.cache import render_drc
    from drc.cnn import load_weights, make_blur_network
    from drc.imageio import tonemap
    from drc.integrators import RenderConfig, render
    from drc.metrics import png_size_proxy, ssim
    from drc.scene import load_scene

    scene = load_scene(args.scene)
    net = load_weights(args.weights) if args.weights else make_blur_network(16)
    budgets = [int(b) for b in args.budgets.split(",")]

    t0 = time.time()
    drc_img, tel = render_drc(
        scene, RenderConfig(indirect_tasks=max(budgets),
                            direct_spp=args.direct_spp, seed=args.seed),
        net, snapshots=budgets)
    drc_seconds = time.time() - t0
    print(f"drc sweep ({max(budgets)} tasks): {drc_seconds:.0f}s, "
          f"{tel['entries']} cache entries", file=sys.stderr)

    t0 = time.time()
    ref, _ = render(scene, RenderConfig(spp=args.ref_spp, seed=args.seed + 1),
                    mode="pt")
    print(f"reference {args.ref_spp} spp: {time.time() - t0:.0f}s",
          file=sys.stderr)

    ref_tm = tonemap(ref) / 255.0
    print(f"{'tasks':>6} {'ssim':>8} {'png_bytes':>10}")
    for b in budgets:
        img = tel["snapshots"][b]
        s = ssim(tonemap(img) / 255.0, ref_tm)
        print(f"{b:>6} {s:>8.4f} {png_size_proxy(tonemap(img)):>10}")
    print(f"{'ref':>6} {'1.0000':>8} {png_size_proxy(tonemap(ref)):>10}")


if __name__ == "__main__":
    main()
