"""Progressive image-plane radiance cache.

Indirect illumination is evaluated on a grid of image-plane points that is
refined pass by pass (spacing halves each pass, offsets jittered so new
pixels get sampled). Each grid point yields a CacheEntry: its predicted
radiance map shaded into an outgoing indirect radiance. All other pixels
interpolate nearby entries with a distance/normal heuristic:

    w = w_p * w_n + w_p + eps
    w_p = max(0, 1 - dist/r)        (image-plane pixels)
    w_n = max(0, n_i . n)

A task is one fixed-budget job: a full-image sub-grid of the current pass
with pass-0 point density (pass k decomposes into 4^k such sub-grids), so
any task budget covers the whole image and cost grows linearly with it.

Entries are append-only across passes; the indirect layer is replaced (not
averaged) by each pass's interpolation.
"""

from __future__ import annotations

import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cnn import forward
from .errors import ConfigError, FormatError
from .geometry import Hit
from .hemimap import HemiMap, render_input_stacks_batch
from .integrators import (WAVE_TARGET, li_direct_batch, primary_chain_batch,
                          shade_indirect, _camera_wave, _iter_tiles)
from .sampler import Sampler

WEIGHT_EPS = 1e-4
GATHER_FACTOR = 2.0
LOCAL_SPACING_FACTOR = 1.5  # nearest-entry distance -> local grid spacing
ENTRY_KEY_BASE = 1 << 40
FALLBACK_KEY_BASE = 1 << 41

DRCC_MAGIC = b"DRCC"
DRCC_VERSION = 1


@dataclass(frozen=True)
class CacheEntry:
    pixel: tuple[int, int]
    position: np.ndarray
    normal: np.ndarray
    indirect_radiance: np.ndarray
    specular_throughput: np.ndarray


@dataclass(frozen=True)
class PassPlan:
    pass_index: int
    r: int
    offset: tuple[int, int]
    grid_x: np.ndarray
    grid_y: np.ndarray
    tiles: tuple
    tile_margin: int
    subgrids: tuple  # ordered (a, b) cells; one sub-grid = one task

    @property
    def task_count(self):
        return len(self.subgrids)

    def task_points(self, t):
        """Grid points of task t: indices congruent to the cell offsets."""
        a, b = self.subgrids[t]
        step = len(self.subgrids) and int(round(np.sqrt(len(self.subgrids))))
        xs = self.grid_x[a::step] if step > 1 else self.grid_x
        ys = self.grid_y[b::step] if step > 1 else self.grid_y
        return xs, ys


def _pass_offsets(pass_index, r0, jitter_seed):
    """Per-pass grid offsets: jittered at pass 0, then shifted each pass so
    successive passes land on new pixels."""
    from .sampler import hash_u64

    r = r0
    off = [int(hash_u64(jitter_seed, 0, 101) % np.uint64(r)),
           int(hash_u64(jitter_seed, 1, 101) % np.uint64(r))]
    for k in range(1, pass_index + 1):
        r = max(1, -(-r0 // (1 << k)))  # ceil division
        off = [(off[0] + (r + 1) // 2) % r, (off[1] + (r + 1) // 2) % r]
    return max(1, -(-r0 // (1 << pass_index))), (off[0], off[1])


def plan_pass(image_size, pass_index, r0=16, jitter_seed=0, tile=64):
    """Grid plan for one refinement pass (spacing ceil(r0 / 2^pass))."""
    if r0 < 2 or (r0 & (r0 - 1)) != 0:
        raise ConfigError("r0 must be a power of two >= 2")
    w, h = image_size
    r, offset = _pass_offsets(pass_index, r0, jitter_seed)
    grid_x = np.arange(offset[0], w, r, dtype=np.int64)
    grid_y = np.arange(offset[1], h, r, dtype=np.int64)
    tiles = tuple(_iter_tiles(w, h, tile))
    step = min(1 << pass_index, r0)  # r floors at 1; cells merge accordingly
    cells = [(a, b) for a in range(step) for b in range(step)]
    from .sampler import hash_u64

    order = np.argsort([int(hash_u64(jitter_seed, 7, a * step + b)) for a, b in cells],
                       kind="stable")
    subgrids = tuple(cells[i] for i in order)
    return PassPlan(pass_index=pass_index, r=r, offset=offset, grid_x=grid_x,
                    grid_y=grid_y, tiles=tiles, tile_margin=r, subgrids=subgrids)


# ---------------------------------------------------------------------------
# interpolation weights (contract ops + vectorized twin)

def entry_weight(entry, pixel, pixel_normal, r):
    """Heuristic weight of a cached entry for an image pixel."""
    dx = entry.pixel[0] - pixel[0]
    dy = entry.pixel[1] - pixel[1]
    dist = np.hypot(dx, dy)
    w_p = max(0.0, 1.0 - dist / r)
    w_n = max(0.0, float(np.dot(entry.normal, pixel_normal)))
    return w_p * w_n + w_p + WEIGHT_EPS


class NeedsDirectSample(Exception):
    """No entry inside the gather radius; the caller must sample a map."""


def interpolate_indirect(entries, pixel, pixel_normal, r):
    """Normalized-weight average of nearby entries' indirect radiance."""
    radius = GATHER_FACTOR * r
    total_w = 0.0
    total = np.zeros(3)
    for e in entries:
        dx = e.pixel[0] - pixel[0]
        dy = e.pixel[1] - pixel[1]
        if np.hypot(dx, dy) > radius:
            continue
        w = entry_weight(e, pixel, pixel_normal, r)
        total_w += w
        total = total + w * e.indirect_radiance
    if total_w == 0.0:
        raise NeedsDirectSample(f"no cache entries within {radius:.1f}px of {pixel}")
    return total / total_w


# ---------------------------------------------------------------------------
# render state

class DrcState:
    """Per-render mutable state: geometry buffers and the entry pool."""

    def __init__(self, scene, config):
        self.scene = scene
        self.config = config
        w, h = scene.camera.resolution
        self.size = (w, h)
        xs, ys = np.meshgrid(np.arange(w, dtype=np.float64),
                             np.arange(h, dtype=np.float64))
        dirs = scene.camera.ray_directions(xs.ravel() + 0.5, ys.ravel() + 0.5)
        origins = np.broadcast_to(scene.camera.position, dirs.shape)
        self.geo = primary_chain_batch(scene, origins, dirs)
        self.indirect = np.zeros((h, w, 3))
        # entry pool (struct of arrays, append-only)
        self.e_px = []
        self.e_py = []
        self.e_pos = []
        self.e_normal = []
        self.e_rad = []
        self.e_thr = []
        self.fallback_pixels = 0
        self._tree = None

    def geo_at(self, x, y):
        w, _ = self.size
        i = y * w + x
        return {k: v[i] for k, v in self.geo.items()}

    def add_entry(self, x, y, pos, normal, rad, thr):
        self.e_px.append(x)
        self.e_py.append(y)
        self.e_pos.append(pos)
        self.e_normal.append(normal)
        self.e_rad.append(rad)
        self.e_thr.append(thr)
        self._tree = None

    @property
    def entry_count(self):
        return len(self.e_px)

    def entries(self):
        return [CacheEntry(pixel=(self.e_px[i], self.e_py[i]),
                           position=self.e_pos[i], normal=self.e_normal[i],
                           indirect_radiance=self.e_rad[i],
                           specular_throughput=self.e_thr[i])
                for i in range(self.entry_count)]

    def tree(self):
        if self._tree is None:
            pts = np.stack([np.asarray(self.e_px, dtype=np.float64),
                            np.asarray(self.e_py, dtype=np.float64)], axis=1)
            self._tree = cKDTree(pts)
        return self._tree


def _entry_hit(state, x, y):
    g = state.geo_at(x, y)
    mat = int(g["mat"])
    material = state.scene.materials[mat]
    return Hit(position=g["position"], normal=g["normal"], distance=float(g["t_total"]),
               material_id=mat, is_emitter=material.is_emitter,
               emitted=np.array(material.emission)), g


MAP_CHUNK = 16  # stacks per wavefront: ~16k rays, the numpy sweet spot


def _evaluate_points(state, net, sampler, points, key_base, workers=1):
    """Map render + network + shade at image pixels, batched.

    Returns result dicts in `points` order, skipping escaped pixels.
    Identical to per-point evaluation: every sample is keyed.
    """
    w, _ = state.size
    live = [(x, y) for x, y in points if state.geo["found"][y * w + x]]
    if not live:
        return []
    chunks = [live[i:i + MAP_CHUNK] for i in range(0, len(live), MAP_CHUNK)]

    def run_chunk(chunk):
        hits = []
        gs = []
        keys = []
        for x, y in chunk:
            hit, g = _entry_hit(state, x, y)
            hits.append(hit)
            gs.append(g)
            keys.append(key_base + y * w + x)
        stacks = render_input_stacks_batch(state.scene, hits, sampler,
                                           state.config, keys)
        out = []
        for (x, y), hit, g, stack, key in zip(chunk, hits, gs, stacks, keys):
            pred = forward(net, stack.as_tensor())
            radmap = HemiMap(np.moveaxis(pred, 0, -1), stack.radiance.frame,
                             scale=stack.s_r)
            rad = shade_indirect(state.scene, hit, radmap, stack.radiance.frame,
                                 -g["direction"], sampler,
                                 state.config.mis_samples, key=key)
            out.append({"x": x, "y": y, "position": hit.position,
                        "normal": hit.normal, "radiance": rad,
                        "throughput": g["throughput"]})
        return out

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run_chunk, chunks))
    else:
        parts = [run_chunk(c) for c in chunks]
    return [r for part in parts for r in part]


def _evaluate_point(state, net, sampler, x, y, key):
    """Single-pixel evaluation (fallback path). None if escaped."""
    w, _ = state.size
    res = _evaluate_points(state, net, sampler, [(x, y)], key - (y * w + x))
    return res[0] if res else None


def _run_task(state, net, sampler, plan, task_index, pass_pixel_base, workers=1):
    """Evaluate one sub-grid task; returns new entries in deterministic order."""
    xs, ys = plan.task_points(task_index)
    gx, gy = np.meshgrid(xs, ys)
    points = list(zip(gx.ravel().tolist(), gy.ravel().tolist()))
    return _evaluate_points(state, net, sampler, points, ENTRY_KEY_BASE + pass_pixel_base,
                            workers=workers)


def _interpolate_layer(state, net, sampler, plan, pass_pixel_base):
    """Rebuild the indirect layer from the full entry pool (replace, not
    average). Escaped pixels carry the environment; uncovered pixels fall
    back to a direct map evaluation at that pixel."""
    w, h = state.size
    layer = np.zeros((h, w, 3))
    env = state.scene.environment
    esc = state.geo["escaped"].reshape(h, w)
    if np.any(env > 0) and esc.any():
        thr = state.geo["throughput"].reshape(h, w, 3)
        layer[esc] = thr[esc] * env

    found = state.geo["found"]
    rows = np.nonzero(found)[0]
    if state.entry_count == 0 or len(rows) == 0:
        return layer

    px = rows % w
    py = rows // w
    pts = np.stack([px, py], axis=1).astype(np.float64)
    # heuristic radius: the pass spacing where the grid is refined, the
    # local spacing (nearest-entry distance) where it is not yet
    d1, _ = state.tree().query(pts, k=1)
    r_eff = np.maximum(float(plan.r), LOCAL_SPACING_FACTOR * d1)
    pairs = state.tree().query_ball_point(pts, GATHER_FACTOR * r_eff)
    counts = np.array([len(c) for c in pairs])
    have = counts > 0

    if have.any():
        flat_e = np.concatenate([np.asarray(c, dtype=np.int64) for c in pairs[have]])
        flat_p = np.repeat(np.arange(len(rows))[have], counts[have])
        e_px = np.asarray(state.e_px, dtype=np.float64)
        e_py = np.asarray(state.e_py, dtype=np.float64)
        e_n = np.asarray(state.e_normal, dtype=np.float64).reshape(-1, 3)
        e_rad = np.asarray(state.e_rad, dtype=np.float64).reshape(-1, 3)
        n_pix = state.geo["normal"][rows]
        dist = np.hypot(e_px[flat_e] - px[flat_p], e_py[flat_e] - py[flat_p])
        w_p = np.maximum(0.0, 1.0 - dist / r_eff[flat_p])
        dots = np.einsum("ij,ij->i", e_n[flat_e], n_pix[flat_p])
        w_n = np.maximum(0.0, dots)
        wgt = w_p * w_n + w_p + WEIGHT_EPS
        num = np.zeros((len(rows), 3))
        den = np.zeros(len(rows))
        np.add.at(num, flat_p, wgt[:, None] * e_rad[flat_e])
        np.add.at(den, flat_p, wgt)
        ok = den > 0
        vals = np.zeros((len(rows), 3))
        vals[ok] = num[ok] / den[ok, None]
        thr = state.geo["throughput"][rows]
        layer.reshape(-1, 3)[rows[have]] = (thr * vals)[have]

    missing = np.nonzero(~have)[0]
    for j in missing:
        x, y = int(px[j]), int(py[j])
        key = FALLBACK_KEY_BASE + pass_pixel_base + y * w + x
        res = _evaluate_point(state, net, sampler, x, y, key)
        state.fallback_pixels += 1
        if res is None:
            continue
        state.add_entry(x, y, res["position"], res["normal"], res["radiance"],
                        res["throughput"])
        layer[y, x] = res["throughput"] * res["radiance"]
    return layer


def run_indirect_pass(scene, net, state, plan, config, sampler=None,
                      max_tasks=None, workers=1):
    """Execute (up to max_tasks of) one pass and refresh the indirect layer.

    Appends this pass's entries to the state pool and replaces
    state.indirect with the interpolation from all entries so far.
    Returns the number of tasks executed.
    """
    sampler = sampler or Sampler(config.sampler_kind, config.seed, 1)
    w, h = state.size
    pass_pixel_base = plan.pass_index * w * h * 4
    n_tasks = plan.task_count if max_tasks is None else min(max_tasks, plan.task_count)
    for t in range(n_tasks):
        for e in _run_task(state, net, sampler, plan, t, pass_pixel_base, workers):
            state.add_entry(e["x"], e["y"], e["position"], e["normal"],
                            e["radiance"], e["throughput"])
    state.indirect = _interpolate_layer(state, net, sampler, plan, pass_pixel_base)
    return n_tasks


# ---------------------------------------------------------------------------
# full DRC render

def _budget_from_config(config):
    if config.passes is not None:
        return sum(min(4 ** k, config.r0 ** 2) for k in range(config.passes))
    return config.indirect_tasks


def render_drc(scene, config, net, interrupt=None, snapshots=None):
    """Direct pass + progressive cached indirect passes.

    `snapshots`: optional iterable of task budgets; the telemetry then
    carries {"snapshots": {budget: image}} captured mid-run (entries are
    append-only, so a snapshot equals a clean run at that budget).
    `interrupt`: callable; when it turns truthy the current pass is
    finalized and the render returns early.
    """
    w, h = scene.camera.resolution
    sampler = Sampler(config.sampler_kind, config.seed,
                      max(config.direct_spp, 1))
    t0 = time.time()
    state = DrcState(scene, config)
    geo_seconds = time.time() - t0

    # direct pass over all pixels; the indirect layer carries the
    # environment for escaped camera chains, so skip it here
    t0 = time.time()
    direct = np.zeros((h, w, 3))
    stats = {}

    def run_tile(bounds):
        tx, ty, tx1, ty1 = bounds
        xs, ys = np.meshgrid(np.arange(tx, tx1), np.arange(ty, ty1))
        xs, ys = xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)
        n = len(xs)
        chunk = max(1, WAVE_TARGET // n)
        acc = np.zeros((n, 3))
        for s0 in range(0, config.direct_spp, chunk):
            ns = min(chunk, config.direct_spp - s0)
            O, D, pix, smp = _camera_wave(scene, sampler, xs, ys, s0, ns)
            L = li_direct_batch(scene, O, D, pix, smp, sampler,
                                include_background=False, stats=stats)
            acc += L.reshape(ns, n, 3).sum(axis=0)
        direct[ty:ty1, tx:tx1] = (acc / config.direct_spp).reshape(
            ty1 - ty, tx1 - tx, 3)

    tiles = list(_iter_tiles(w, h, config.tile))
    workers = config.worker_count
    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for t in tiles:
            run_tile(t)
    direct_seconds = time.time() - t0

    budget = _budget_from_config(config)
    snapshots = sorted(set(snapshots)) if snapshots else []
    snap_images = {}
    telemetry = {"mode": "drc", "direct_spp": config.direct_spp,
                 "geometry_seconds": geo_seconds,
                 "direct_seconds": direct_seconds, "passes": [],
                 "nonfinite": stats.get("nonfinite", 0)}

    msampler = Sampler(config.sampler_kind, config.seed, 1)
    done = 0
    k = 0
    while done < budget:
        plan = plan_pass((w, h), k, config.r0, jitter_seed=config.seed,
                         tile=config.tile)
        t0 = time.time()
        base = plan.pass_index * w * h * 4
        executed = 0
        for t in range(plan.task_count):
            if done >= budget:
                break
            for e in _run_task(state, net, msampler, plan, t, base, workers):
                state.add_entry(e["x"], e["y"], e["position"], e["normal"],
                                e["radiance"], e["throughput"])
            done += 1
            executed += 1
            if done in snapshots:
                state.indirect = _interpolate_layer(state, net, msampler, plan, base)
                snap_images[done] = direct + state.indirect
        state.indirect = _interpolate_layer(state, net, msampler, plan, base)
        telemetry["passes"].append({
            "index": k, "r": plan.r, "tasks": executed,
            "entries": state.entry_count,
            "seconds": time.time() - t0,
        })
        k += 1
        if interrupt is not None and interrupt():
            break  # current pass finalized above

    image = direct + state.indirect
    telemetry["entries"] = state.entry_count
    telemetry["fallback_pixels"] = state.fallback_pixels
    telemetry["tasks"] = done
    if snap_images:
        telemetry["snapshots"] = snap_images
    telemetry["state"] = state
    return image, telemetry


# ---------------------------------------------------------------------------
# diagnostic cache dump

def write_cache_dump(entries, path):
    """Little-endian entry records: pixel, position, normal, radiance."""
    with open(path, "wb") as f:
        f.write(DRCC_MAGIC)
        f.write(struct.pack("<II", DRCC_VERSION, len(entries)))
        for e in entries:
            f.write(struct.pack("<II", int(e.pixel[0]), int(e.pixel[1])))
            f.write(np.asarray(e.position, dtype="<f4").tobytes())
            f.write(np.asarray(e.normal, dtype="<f4").tobytes())
            f.write(np.asarray(e.indirect_radiance, dtype="<f4").tobytes())


def read_cache_dump(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != DRCC_MAGIC:
        raise FormatError("bad magic, not a DRCC dump", offset=0)
    version, count = struct.unpack("<II", raw[4:12])
    if version != DRCC_VERSION:
        raise FormatError(f"unsupported DRCC version {version}", offset=4)
    rec = 8 + 9 * 4
    if len(raw) != 12 + count * rec:
        raise FormatError("truncated cache dump", offset=len(raw))
    entries = []
    for i in range(count):
        o = 12 + i * rec
        x, y = struct.unpack("<II", raw[o:o + 8])
        vals = np.frombuffer(raw[o + 8:o + rec], dtype="<f4").astype(np.float64)
        entries.append(CacheEntry(pixel=(x, y), position=vals[0:3],
                                  normal=vals[3:6], indirect_radiance=vals[6:9],
                                  specular_throughput=np.ones(3)))
    return entries
