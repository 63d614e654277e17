"""DRCD reading, augmentation and ablation.

This is an independent implementation of the DRCD container (the renderer
side has its own); cross-reads are covered by parity tests.

Augmentation works in hemisphere-map space: azimuthal rotations are
horizontal circular shifts by {0, 8, 16, 24} columns and a horizontal
flip, applied to all input channels and the target alike. The normal
channels hold frame-local components, so their X/Y pair is re-expressed
under the same frame rotation (and Y negated under the flip). Vertical
flips are not a hemisphere symmetry and are excluded.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, replace

import numpy as np

DRCD_MAGIC = b"DRCD"
DRCD_VERSION = 1

SHIFTS = (0, 8, 16, 24)


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class Example:
    input: np.ndarray   # (7, res, res) float32
    target: np.ndarray  # (3, res, res) float32
    s_r: float
    s_d: float
    scene_id: str
    pixel: tuple[int, int]


def read_drcd(src):
    """Parse a DRCD file (path or bytes) into Examples."""
    if isinstance(src, str):
        with open(src, "rb") as f:
            raw = f.read()
    else:
        raw = src
    buf = io.BytesIO(raw)

    def take(n, what):
        b = buf.read(n)
        if len(b) != n:
            raise DatasetError(f"truncated while reading {what} at byte {buf.tell()}")
        return b

    if take(4, "magic") != DRCD_MAGIC:
        raise DatasetError("bad magic, not a DRCD file")
    version, count, res = struct.unpack("<IIH", take(10, "header"))
    if version != DRCD_VERSION:
        raise DatasetError(f"unsupported DRCD version {version}")
    out = []
    for _ in range(count):
        (slen,) = struct.unpack("<I", take(4, "scene-id length"))
        sid = take(slen, "scene id").decode("utf-8")
        px, py = struct.unpack("<II", take(8, "pixel"))
        s_r, s_d = struct.unpack("<ff", take(8, "scales"))
        inp = np.frombuffer(take(7 * res * res * 4, "input"), dtype="<f4")
        tgt = np.frombuffer(take(3 * res * res * 4, "target"), dtype="<f4")
        out.append(Example(input=inp.reshape(7, res, res).copy(),
                           target=tgt.reshape(3, res, res).copy(),
                           s_r=s_r, s_d=s_d, scene_id=sid, pixel=(px, py)))
    if buf.read(1):
        raise DatasetError("trailing bytes after last example")
    return out


def _rotate_normals_xy(normals, alpha):
    """Re-express frame-local normal components after rotating the frame's
    tangent basis by alpha about the surface normal."""
    x, y = normals[0], normals[1]
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.stack([x * ca + y * sa, -x * sa + y * ca, normals[2]])


def transform_example(example, shift=0, flip=False):
    """One augmentation variant: circular column shift, optional flip."""
    res = example.input.shape[-1]
    inp = np.roll(example.input, -shift, axis=-1)
    tgt = np.roll(example.target, -shift, axis=-1)
    alpha = 2.0 * np.pi * shift / res
    normals = _rotate_normals_xy(inp[3:6].astype(np.float64), alpha)
    if flip:
        inp = inp[..., ::-1]
        tgt = tgt[..., ::-1]
        normals = normals[..., ::-1]
        normals = np.stack([normals[0], -normals[1], normals[2]])
    inp = inp.copy()
    inp[3:6] = normals.astype(np.float32)
    return replace(example, input=inp, target=np.ascontiguousarray(tgt))


def augment(example):
    """All rotation/flip variants of one example (identity included)."""
    return [transform_example(example, s, f) for s in SHIFTS for f in (False, True)]


ABLATABLE = {"normals": slice(3, 6), "distance": slice(6, 7)}


def ablate(example, mask):
    """Zero the masked auxiliary input channels; the target is untouched."""
    unknown = set(mask) - set(ABLATABLE)
    if unknown:
        raise DatasetError(f"unknown ablation channels {sorted(unknown)}")
    if not mask:
        return example
    inp = example.input.copy()
    for name in mask:
        inp[ABLATABLE[name]] = 0.0
    return replace(example, input=inp)


def split_by_scene(examples, val_fraction=0.1, seed=0):
    """Deterministic train/validation split on whole scenes.

    At least one scene is held out whenever there are two or more scenes.
    """
    import hashlib

    scenes = sorted({e.scene_id for e in examples})
    if len(scenes) < 2:
        return examples, []
    n_val = max(1, int(round(val_fraction * len(scenes))))
    ranked = sorted(scenes, key=lambda s: hashlib.sha256(
        f"{seed}:{s}".encode()).hexdigest())
    val_scenes = set(ranked[:n_val])
    train = [e for e in examples if e.scene_id not in val_scenes]
    val = [e for e in examples if e.scene_id in val_scenes]
    return train, val
