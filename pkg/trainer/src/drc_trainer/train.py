"""Training loop: Adam at 6e-5, batch 32, L1 loss, 3 epochs over the
augmented data; emits loss curves as CSV (step, split, loss) and an
atomically-published DRCW weights file."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .data import ablate, augment, split_by_scene
from .model import DEFAULT_SLOPE, MapAutoencoder, export_drcw


@dataclass
class TrainConfig:
    learning_rate: float = 6e-5
    batch_size: int = 32
    epochs: int = 3
    ablation: tuple = ()  # subset of {"normals", "distance"}
    seed: int = 0
    val_fraction: float = 0.1
    k: int = 64
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch size and epochs must be >= 1")
        if set(self.ablation) - {"normals", "distance"}:
            raise ValueError("ablation mask must be within {normals, distance}")


class _MapDataset(Dataset):
    def __init__(self, examples, ablation=(), augmented=True):
        base = [ablate(e, ablation) for e in examples]
        self.items = []
        for e in base:
            self.items.extend(augment(e) if augmented else [e])

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        e = self.items[i]
        return torch.from_numpy(e.input.copy()), torch.from_numpy(e.target.copy())


def _evaluate(model, loader, loss_fn):
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for x, y in loader:
            total += float(loss_fn(model(x), y)) * len(x)
            count += len(x)
    model.train()
    return total / max(count, 1)


def train(examples, config, weights_out, curves_out=None, log=print):
    """Fit the autoencoder; returns (model, history).

    history rows are (step, split, loss) with split in {train, val};
    validation runs once per epoch on a by-scene holdout.
    """
    torch.manual_seed(config.seed)
    np.random.seed(config.seed)

    train_ex, val_ex = split_by_scene(examples, config.val_fraction, config.seed)
    if not val_ex:  # single-scene corpus: fall back to an example split
        cut = max(1, len(examples) // 10)
        train_ex, val_ex = examples[cut:], examples[:cut]
    train_ds = _MapDataset(train_ex, config.ablation, augmented=True)
    val_ds = _MapDataset(val_ex, config.ablation, augmented=False)
    gen = torch.Generator().manual_seed(config.seed)
    train_loader = DataLoader(train_ds, batch_size=config.batch_size,
                              shuffle=True, generator=gen, num_workers=0)
    val_loader = DataLoader(val_ds, batch_size=config.batch_size, num_workers=0)

    model = MapAutoencoder(k=config.k, slope=config.slope)
    model.train()
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    loss_fn = nn.L1Loss()

    history = []
    step = 0
    val0 = _evaluate(model, val_loader, loss_fn)
    history.append((step, "val", val0))
    log(f"initial val L1 {val0:.5f} "
        f"({len(train_ds)} augmented train, {len(val_ds)} val examples)")
    for epoch in range(config.epochs):
        for x, y in train_loader:
            optimizer.zero_grad()
            loss = loss_fn(model(x), y)
            loss.backward()
            optimizer.step()
            step += 1
            history.append((step, "train", float(loss)))
        val = _evaluate(model, val_loader, loss_fn)
        history.append((step, "val", val))
        log(f"epoch {epoch + 1}/{config.epochs}: val L1 {val:.5f}")

    if curves_out:
        with open(curves_out, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "split", "loss"])
            writer.writerows(history)
    if weights_out:
        export_drcw(model, weights_out)
    model.eval()
    return model, history
