#!/usr/bin/env python3
"""Train the autoencoder on a DRCD dataset and export DRCW weights.

Example:
    python3 trainer/scripts/train_model.py \
        --data trainer/data/desk.drcd --out weights.drcw \
        --curves loss.csv --k 64 --epochs 3
"""

import argparse
import sys


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data", required=True, help="DRCD dataset")
    p.add_argument("--out", required=True, help="DRCW weights output")
    p.add_argument("--curves", help="loss curve CSV output")
    p.add_argument("--k", type=int, default=64, help="base layer width")
    p.add_argument("--epochs", type=int, default=3)
    p.add_argument("--lr", type=float, default=6e-5)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ablate", default="",
                   help="comma list from {normals,distance}")
    args = p.parse_args()

    from drc_trainer.data import read_drcd
    from drc_trainer.train import TrainConfig, train

    examples = read_drcd(args.data)
    print(f"{len(examples)} examples from {args.data}")
    mask = tuple(t for t in args.ablate.split(",") if t)
    cfg = TrainConfig(learning_rate=args.lr, batch_size=args.batch,
                      epochs=args.epochs, ablation=mask, seed=args.seed,
                      k=args.k)
    train(examples, cfg, args.out, args.curves)
    print(f"weights written to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
