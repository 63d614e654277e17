"""Training example generation and the DRCD container.

Reference mode walks a grid of image-plane points, shoots one camera ray
per point, and stores the 7-channel input stack (1 spp) together with a
high-spp ground-truth radiance map rendered in the same hemisphere frame.
The target shares the input's radiance normalization scale, so
target * s_r is physical radiance.

DRCD layout (little-endian): magic "DRCD", u32 version=1, u32 count,
u16 resolution, then per example: u32 scene-id length + UTF-8 id,
2 x u32 pixel, 2 x f32 (s_r, s_d), 7*res*res f32 input, 3*res*res f32
target.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .hemimap import luminance, render_input_stacks_batch, texel_to_direction
from .integrators import primary_chain_batch, trace_radiance_batch
from .geometry import T_EPS, Hit
from .sampler import SAMPLER_KINDS, Sampler

DRCD_MAGIC = b"DRCD"
DRCD_VERSION = 1
DATASET_KEY_BASE = 1 << 42


@dataclass(frozen=True)
class TrainingExample:
    input: np.ndarray   # (7, res, res) float32, normalized
    target: np.ndarray  # (3, res, res) float32, normalized by the input s_r
    s_r: float
    s_d: float
    scene_id: str
    pixel: tuple[int, int]

    def __post_init__(self):
        if self.input.ndim != 3 or self.input.shape[0] != 7:
            raise FormatError("input stack must be (7,res,res)")
        if self.target.shape != (3,) + self.input.shape[1:]:
            raise FormatError("target must be (3,res,res) matching the input")
        # scales live as f32 in the container; keep the in-memory value equal
        object.__setattr__(self, "s_r", float(np.float32(self.s_r)))
        object.__setattr__(self, "s_d", float(np.float32(self.s_d)))


def generate_examples(scene, grid, ref_spp, sampler_variants=None, seed=0,
                      config=None, progress=None):
    """Reference mode: paired low/high-quality maps over an N x M pixel grid.

    Grid intersections whose camera ray escapes the scene are skipped.
    Sampler kind and seed vary per example. Returns list of TrainingExample.
    """
    from .integrators import RenderConfig

    cfg = config or RenderConfig()
    nx, ny = grid
    if nx < 1 or ny < 1:
        raise ConfigError("grid must be at least 1x1")
    if ref_spp < 256:
        raise ConfigError("ref_spp must be >= 256")
    kinds = sampler_variants or list(SAMPLER_KINDS)
    w, h = scene.camera.resolution
    res = cfg.map_resolution

    xs = ((np.arange(nx) + 0.5) * w / nx).astype(np.int64)
    ys = ((np.arange(ny) + 0.5) * h / ny).astype(np.int64)
    gx, gy = np.meshgrid(xs, ys)
    gx, gy = gx.ravel(), gy.ravel()
    dirs = scene.camera.ray_directions(gx + 0.5, gy + 0.5)
    origins = np.broadcast_to(scene.camera.position, dirs.shape)
    geo = primary_chain_batch(scene, origins, dirs)

    examples = []
    for i in range(len(gx)):
        if not geo["found"][i]:
            continue
        mat = int(geo["mat"][i])
        material = scene.materials[mat]
        hit = Hit(position=geo["position"][i], normal=geo["normal"][i],
                  distance=float(geo["t_total"][i]), material_id=mat,
                  is_emitter=material.is_emitter,
                  emitted=np.array(material.emission))
        kind = kinds[i % len(kinds)]
        sampler = Sampler(kind, seed + i, max(ref_spp, 1))
        key = DATASET_KEY_BASE + i
        stack = render_input_stacks_batch(scene, [hit], sampler, cfg, [key])[0]
        target = _reference_map(scene, hit, stack.radiance.frame, sampler,
                                ref_spp, cfg, key)
        examples.append(TrainingExample(
            input=stack.as_tensor(),
            target=np.moveaxis(target / stack.s_r, -1, 0).astype(np.float32),
            s_r=stack.s_r, s_d=stack.s_d,
            scene_id=scene.name, pixel=(int(gx[i]), int(gy[i])),
        ))
        if progress is not None:
            progress(len(examples), int(geo["found"].sum()))
    return examples


def _reference_map(scene, hit, frame, sampler, ref_spp, cfg, key):
    """Ground-truth radiance map: ref_spp paths per texel, same frame."""
    res = cfg.map_resolution
    uu, vv = np.meshgrid(np.arange(res), np.arange(res))
    dirs = texel_to_direction(uu.ravel(), vv.ravel(), frame, res)
    origin = hit.position + T_EPS * hit.normal
    total = np.zeros((res * res, 3))
    chunk = max(1, (1 << 14) // (res * res))
    texels = np.arange(res * res, dtype=np.uint64)
    for s0 in range(0, ref_spp, chunk):
        ns = min(chunk, ref_spp - s0)
        o = np.tile(np.broadcast_to(origin, (res * res, 3)), (ns, 1))
        d = np.tile(dirs, (ns, 1))
        pix = np.tile(texels, ns) + np.uint64(key) * np.uint64(1 << 12)
        smp = np.repeat(np.arange(s0, s0 + ns, dtype=np.uint64), res * res)
        L = trace_radiance_batch(scene, o, d, pix, smp, sampler,
                                 max_depth=cfg.max_path_depth,
                                 skip_first_emission=True,
                                 rr_start=cfg.rr_start)
        total += L.reshape(ns, res * res, 3).sum(axis=0)
    return (total / ref_spp).reshape(res, res, 3)


# ---------------------------------------------------------------------------
# container

def write_dataset(examples, path=None):
    """Serialize examples as DRCD; returns bytes when path is None."""
    if not examples:
        raise FormatError("refusing to write an empty dataset")
    res = examples[0].input.shape[1]
    buf = io.BytesIO()
    buf.write(DRCD_MAGIC)
    buf.write(struct.pack("<IIH", DRCD_VERSION, len(examples), res))
    for e in examples:
        sid = e.scene_id.encode("utf-8")
        buf.write(struct.pack("<I", len(sid)))
        buf.write(sid)
        buf.write(struct.pack("<II", int(e.pixel[0]), int(e.pixel[1])))
        buf.write(struct.pack("<ff", e.s_r, e.s_d))
        buf.write(np.ascontiguousarray(e.input, dtype="<f4").tobytes())
        buf.write(np.ascontiguousarray(e.target, dtype="<f4").tobytes())
    raw = buf.getvalue()
    if path is None:
        return raw
    with open(path, "wb") as f:
        f.write(raw)
    return None


def read_dataset(src):
    """Parse DRCD bytes (or a file path) into TrainingExamples."""
    if isinstance(src, str):
        with open(src, "rb") as f:
            raw = f.read()
    else:
        raw = src
    buf = io.BytesIO(raw)

    def take(n, what):
        b = buf.read(n)
        if len(b) != n:
            raise FormatError(f"truncated while reading {what}", offset=buf.tell())
        return b

    if take(4, "magic") != DRCD_MAGIC:
        raise FormatError("bad magic, not a DRCD file", offset=0)
    version, count, res = struct.unpack("<IIH", take(10, "header"))
    if version != DRCD_VERSION:
        raise FormatError(f"unsupported DRCD version {version}", offset=4)
    examples = []
    for _ in range(count):
        (slen,) = struct.unpack("<I", take(4, "scene-id length"))
        sid = take(slen, "scene id").decode("utf-8")
        px, py = struct.unpack("<II", take(8, "pixel"))
        s_r, s_d = struct.unpack("<ff", take(8, "scales"))
        inp = np.frombuffer(take(7 * res * res * 4, "input"), dtype="<f4")
        tgt = np.frombuffer(take(3 * res * res * 4, "target"), dtype="<f4")
        examples.append(TrainingExample(
            input=inp.reshape(7, res, res).copy(),
            target=tgt.reshape(3, res, res).copy(),
            s_r=s_r, s_d=s_d, scene_id=sid, pixel=(px, py)))
    if buf.read(1):
        raise FormatError("trailing bytes after last example", offset=buf.tell() - 1)
    return examples
