"""Hemispherical latitude-longitude maps.

A map covers the upper hemisphere around a surface frame: rows index the
polar angle (row 0 nearest the pole, i.e. the surface normal), columns the
azimuth. Texel centers sit at half-texel offsets:

    phi   = 2*pi * (u + 0.5) / res
    theta = (pi/2) * (v + 0.5) / res

HemiMap carries a `scale` so physical radiance = data * scale; normalize/
denormalize flip the attribute without touching the raster, which keeps
round trips bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .bsdf import Frame, build_frame
from .errors import ContractError
from .geometry import T_EPS, intersect_batch

MAP_RES = 32
LUMA = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True)
class HemiMap:
    data: np.ndarray  # (res, res) or (res, res, 3)
    frame: Frame | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.data.ndim not in (2, 3):
            raise ValueError("HemiMap data must be (res,res[,3])")
        if self.data.shape[0] != self.data.shape[1]:
            raise ValueError("HemiMap raster must be square")

    @property
    def res(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return 1 if self.data.ndim == 2 else self.data.shape[2]

    def physical(self):
        """Materialized physical values (data * scale)."""
        return np.asarray(self.data, dtype=np.float64) * self.scale

    def normalized(self, s):
        """Fold a scale factor into the carried scale; raster untouched."""
        return replace(self, scale=self.scale * s)

    def denormalized(self, s):
        return replace(self, scale=self.scale / s)


def luminance(rgb):
    return np.asarray(rgb) @ LUMA


def texel_theta(v, res=MAP_RES):
    return (np.pi / 2.0) * (np.asarray(v, dtype=np.float64) + 0.5) / res


def texel_solid_angle(v, res=MAP_RES):
    """Approximate per-texel solid angle (2pi/res)*(pi/(2res))*sin(theta_v)."""
    return (2.0 * np.pi / res) * (np.pi / (2.0 * res)) * np.sin(texel_theta(v, res))


def texel_to_direction(u, v, frame, res=MAP_RES):
    """World direction of texel center (u=column, v=row)."""
    u = np.asarray(u)
    v = np.asarray(v)
    if np.any(u < 0) or np.any(u >= res) or np.any(v < 0) or np.any(v >= res):
        raise ContractError("texel index out of range")
    phi = 2.0 * np.pi * (np.asarray(u, dtype=np.float64) + 0.5) / res
    theta = texel_theta(v, res)
    st = np.sin(theta)
    local = np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)
    return frame.to_world(local)


def direction_to_texel(direction, frame, res=MAP_RES):
    """Texel containing a world direction, or None if below the hemisphere.

    Scalar form; use `directions_to_texels` for batches.
    """
    local = frame.to_local(np.asarray(direction, dtype=np.float64))
    if local[2] < 0.0:
        return None
    u, v, _ = _texels_from_local(local[None], res)
    return int(u[0]), int(v[0])


def directions_to_texels(local_dirs, res=MAP_RES):
    """Batch texel lookup from local directions; below-hemisphere rows get
    valid=False."""
    u, v, valid = _texels_from_local(np.atleast_2d(local_dirs), res)
    return u, v, valid


def _texels_from_local(local, res):
    z = np.clip(local[:, 2], -1.0, 1.0)
    valid = z >= 0.0
    theta = np.arccos(z)
    phi = np.arctan2(local[:, 1], local[:, 0]) % (2.0 * np.pi)
    u = np.minimum((phi / (2.0 * np.pi) * res).astype(np.int64), res - 1)
    v = np.minimum((theta / (np.pi / 2.0) * res).astype(np.int64), res - 1)
    v = np.minimum(v, res - 1)
    return u, v, valid


def map_lookup(hemimap, local_dirs):
    """Physical map values along local directions (0 below the hemisphere)."""
    u, v, valid = directions_to_texels(np.atleast_2d(local_dirs), hemimap.res)
    u = np.where(valid, u, 0)
    v = np.where(valid, v, 0)
    vals = np.asarray(hemimap.data, dtype=np.float64)[v, u] * hemimap.scale
    if vals.ndim == 1:
        vals = vals[:, None]
    return np.where(valid[:, None], vals, 0.0)


# ---------------------------------------------------------------------------
# piecewise-constant 2D distribution over texels

@dataclass(frozen=True)
class Distribution2D:
    prob: np.ndarray      # (res, res), sums to 1
    row_cdf: np.ndarray   # (res,)
    col_cdf: np.ndarray   # (res, res), conditional per row

    @property
    def res(self):
        return self.prob.shape[0]

    def sample(self, u1, u2):
        """Draw texels; u1/u2 broadcast to arrays. Returns (u, v, prob)."""
        u1 = np.atleast_1d(np.asarray(u1, dtype=np.float64))
        u2 = np.atleast_1d(np.asarray(u2, dtype=np.float64))
        v = np.searchsorted(self.row_cdf, u1, side="right")
        v = np.minimum(v, self.res - 1)
        cc = self.col_cdf[v]
        u = (cc <= u2[:, None]).sum(axis=1)
        u = np.minimum(u, self.res - 1)
        return u, v, self.prob[v, u]

    def pdf_texel(self, u, v):
        return self.prob[v, u]


def build_map_distribution(radmap):
    """Luminance * sin(theta) weights with a 1e-8 floor, normalized."""
    data = radmap.physical()
    lum = luminance(data) if data.ndim == 3 else np.asarray(data, dtype=np.float64)
    if np.any(lum < 0):
        raise ContractError("radiance map must be nonnegative")
    res = radmap.res
    w = lum * np.sin(texel_theta(np.arange(res), res))[:, None] + 1e-8
    prob = w / w.sum()
    rows = prob.sum(axis=1)
    row_cdf = np.cumsum(rows)
    row_cdf[-1] = 1.0
    cond = prob / rows[:, None]
    col_cdf = np.cumsum(cond, axis=1)
    col_cdf[:, -1] = 1.0
    return Distribution2D(prob=prob, row_cdf=row_cdf, col_cdf=col_cdf)


def sample_map(dist, radmap, frame, u):
    """Importance-sample the map. Returns dict(dir, pdf, radiance, u, v).

    pdf is per solid angle: p(texel) / omega(texel); radiance is the
    denormalized (physical) texel value. Vectorizes over u = (u1, u2) arrays.
    """
    u1, u2 = u
    cu, cv, p = dist.sample(u1, u2)
    direction = texel_to_direction(cu, cv, frame, dist.res)
    pdf = p / texel_solid_angle(cv, dist.res)
    data = np.asarray(radmap.data, dtype=np.float64)
    radiance = data[cv, cu] * radmap.scale
    if radiance.ndim == 1:
        radiance = radiance[:, None]
    return {"dir": direction, "pdf": pdf, "radiance": radiance, "u": cu, "v": cv}


def map_pdf(dist, local_dirs):
    """Solid-angle pdf of sample_map along local directions (0 below)."""
    u, v, valid = directions_to_texels(np.atleast_2d(local_dirs), dist.res)
    u = np.where(valid, u, 0)
    v = np.where(valid, v, 0)
    pdf = dist.prob[v, u] / texel_solid_angle(v, dist.res)
    return np.where(valid, pdf, 0.0)


# ---------------------------------------------------------------------------
# input stacks

@dataclass(frozen=True)
class InputStack:
    radiance: HemiMap  # normalized raster, scale = s_r
    normals: HemiMap   # frame-local components in [-1, 1]
    distance: HemiMap  # normalized raster, scale = s_d
    s_r: float
    s_d: float

    def as_tensor(self):
        """(7, res, res) float32 stack: radiance RGB, normal XYZ, distance."""
        r = np.moveaxis(self.radiance.data, -1, 0)
        n = np.moveaxis(self.normals.data, -1, 0)
        d = self.distance.data[None]
        return np.concatenate([r, n, d], axis=0).astype(np.float32)


def render_input_stack(scene, hit, sampler, config=None, key=0):
    """Render the 7-channel stack at a primary intersection.

    One ray per texel: radiance is a 1-spp path estimate that skips emission
    seen directly by the map ray, normals/distance come from the first hit.
    hit.normal must be front-facing (find_primary_intersection guarantees it).
    """
    return render_input_stacks_batch(scene, [hit], sampler, config, [key])[0]


def render_input_stacks_batch(scene, hits, sampler, config=None, keys=None):
    """Batched render_input_stack over several intersections.

    Rays of all stacks share one wavefront; because every sample is keyed by
    (key, texel, dimension) the result is bit-identical to per-hit calls.
    """
    from .integrators import RenderConfig, trace_radiance_batch

    cfg = config or RenderConfig()
    res = cfg.map_resolution
    n = len(hits)
    keys = np.asarray(keys if keys is not None else np.zeros(n), dtype=np.uint64)
    uu, vv = np.meshgrid(np.arange(res), np.arange(res))
    frames = [build_frame(h.normal, scene.global_up) for h in hits]
    dirs = np.concatenate([
        texel_to_direction(uu.ravel(), vv.ravel(), f, res) for f in frames])
    origins = np.concatenate([
        np.broadcast_to(h.position + T_EPS * h.normal, (res * res, 3))
        for h in hits])

    geom = scene.geometry
    first = intersect_batch(geom, origins, dirs)
    dist = np.where(first["hit"], first["t"], 0.0)
    facing = np.einsum("ij,ij->i", first["normal"], dirs) > 0.0
    n_front = np.where(facing[:, None], -first["normal"], first["normal"])

    radiance = trace_radiance_batch(
        scene, origins, dirs,
        pixel_keys=np.repeat(keys, res * res),
        sample_keys=np.tile(np.arange(res * res, dtype=np.uint64), n),
        sampler=sampler, max_depth=cfg.max_path_depth,
        skip_first_emission=True, rr_start=cfg.rr_start,
    )

    stacks = []
    for i, frame in enumerate(frames):
        s = slice(i * res * res, (i + 1) * res * res)
        n_local = np.stack([n_front[s] @ frame.t, n_front[s] @ frame.b,
                            n_front[s] @ frame.n], axis=1)
        n_local = np.where(first["hit"][s][:, None], n_local, 0.0)
        rad_map = radiance[s].reshape(res, res, 3)
        d = dist[s]
        s_r = float(luminance(rad_map).mean() + 1e-3)
        s_d = float(d.max()) if d.max() > 0 else 1.0
        stacks.append(InputStack(
            radiance=HemiMap((rad_map / s_r).astype(np.float32), frame, scale=s_r),
            normals=HemiMap(n_local.reshape(res, res, 3).astype(np.float32), frame),
            distance=HemiMap((d / s_d).reshape(res, res).astype(np.float32),
                             frame, scale=s_d),
            s_r=s_r,
            s_d=s_d,
        ))
    return stacks
