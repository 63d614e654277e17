#!/usr/bin/env python3
"""Map-level quality comparison: raw 1-spp vs Gaussian blur vs network
prediction against the high-spp reference, over a DRCD dataset.

    python3 scripts/map_quality.py --data d.drcd [--weights w.drcw]
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))


def tonemapped(x):
    return np.moveaxis(x / (1.0 + x), 0, -1)


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data", required=True, help="DRCD dataset")
    p.add_argument("--weights", help="DRCW weights (default: blur network)")
    p.add_argument("--limit", type=int, default=0)
    args = p.parse_args()

    from drc.cnn import forward, gaussian_blur, load_weights, make_blur_network
    from drc.dataset import read_dataset
    from drc.hemimap import HemiMap
    from drc.metrics import kruskal_wallis, ssim

    examples = read_dataset(args.data)
    if args.limit:
        examples = examples[:args.limit]
    net = load_weights(args.weights) if args.weights else make_blur_network(16)

    raw_s, blur_s, pred_s = [], [], []
    for e in examples:
        raw = e.input[0:3].astype(np.float64)
        ref = e.target.astype(np.float64)
        blurred = np.stack([gaussian_blur(HemiMap(raw[c], None), 1.0).data
                            for c in range(3)])
        pred = forward(net, e.input).astype(np.float64)
        raw_s.append(ssim(tonemapped(raw), tonemapped(ref)))
        blur_s.append(ssim(tonemapped(blurred), tonemapped(ref)))
        pred_s.append(ssim(tonemapped(pred), tonemapped(ref)))

    print(f"{len(examples)} map pairs")
    for name, scores in (("raw 1spp", raw_s), ("gaussian", blur_s),
                         ("predicted", pred_s)):
        print(f"{name:>10}: ssim mean {np.mean(scores):.4f} "
              f"median {np.median(scores):.4f}")
    kw = kruskal_wallis([pred_s, blur_s])
    print(f"kruskal-wallis predicted vs gaussian: H={kw['H']:.2f} p={kw['p']:.3g}")


if __name__ == "__main__":
    main()
