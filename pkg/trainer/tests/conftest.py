import os

import numpy as np
import pytest

from drc_trainer.data import Example

GOLDEN = os.path.join(os.path.dirname(__file__), "..", "..", "tests", "golden")
DATA_DIR = os.path.join(os.path.dirname(__file__), "..", "data")


@pytest.fixture
def rng():
    return np.random.default_rng(77)


def _smooth_field(rng, res=32, channels=3, scale=1.0):
    """Nonnegative low-frequency random field (sum of cosine lobes)."""
    uu, vv = np.meshgrid(np.arange(res), np.arange(res))
    out = np.zeros((channels, res, res))
    for c in range(channels):
        f = np.full((res, res), 0.2)
        for _ in range(4):
            fx, fy = rng.integers(1, 4, 2)
            ph1, ph2 = rng.uniform(0, 2 * np.pi, 2)
            amp = rng.uniform(0.1, 0.6)
            f = f + amp * (1 + np.cos(2 * np.pi * fx * uu / res + ph1)
                           * np.cos(np.pi * fy * vv / res + ph2)) * 0.5
        out[c] = f * scale
    return out


def synthetic_examples(n, rng, res=32, n_scenes=8, sparsity=0.06):
    """Procedural denoising task: target = smooth map, input = sparse
    unbiased point samples of it (1-spp-like), plus smooth aux channels."""
    examples = []
    for i in range(n):
        target = _smooth_field(rng, res)
        mask = rng.random((res, res)) < sparsity
        noisy = target * mask[None] / sparsity
        noisy *= rng.uniform(0.5, 1.5, (1, res, res))
        normal_dir = _smooth_field(rng, res, channels=2, scale=0.5) - 0.25
        nz = np.sqrt(np.clip(1.0 - (normal_dir ** 2).sum(axis=0), 0.04, 1.0))
        normals = np.concatenate([normal_dir, nz[None]])
        dist = _smooth_field(rng, res, channels=1)
        dist /= dist.max()
        inp = np.concatenate([noisy, normals, dist]).astype(np.float32)
        examples.append(Example(input=inp, target=target.astype(np.float32),
                                s_r=1.0, s_d=1.0,
                                scene_id=f"syn{i % n_scenes}",
                                pixel=(i % res, (i * 7) % res)))
    return examples
