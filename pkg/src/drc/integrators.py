"""Monte Carlo light transport estimators.

Three estimators share a vectorized wavefront core:

* `li_path` / `trace_radiance_batch`: full path tracing with next-event
  estimation and BRDF sampling combined by the beta=2 power heuristic;
* `li_direct` / `li_direct_batch`: emission at the primary intersection plus
  single-bounce direct lighting, following specular chains without
  incrementing depth;
* `shade_indirect`: the cached-map shading integral, mixing draws from the
  map's 2D distribution with BRDF draws.

All sample values come from the stateless Sampler keyed by (pixel, sample,
dimension), so results are independent of batching and worker count. Each
path segment owns a block of 8 dimensions starting at 2 + 8*segment
(dimensions 0 and 1 belong to the caller's pixel jitter).
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bsdf import (KIND_MIRROR, build_frames_batch, eval_batch,
                   power_heuristic, sample_batch, schlick)
from .errors import ConfigError, ContractError
from .geometry import T_EPS, Hit, Ray, intersect, intersect_batch
from .hemimap import (build_map_distribution, map_lookup, map_pdf, sample_map)
from .sampler import Sampler

SPECULAR_CHAIN_BOUND = 16
SPECULAR_THROUGHPUT_CUTOFF = 1e-4
RR_FLOOR = 0.05
SHADE_DIM_BASE = 1 << 20  # keeps shade_indirect streams clear of path dims


@dataclass
class RenderConfig:
    spp: int = 16
    direct_spp: int = 8
    indirect_tasks: int = 5
    passes: int | None = None
    max_path_depth: int = 8
    map_resolution: int = 32
    mis_samples: int = 16
    rr_start: int = 5
    seed: int = 0
    threads: int = 0  # 0 = logical cores
    r0: int = 16
    tile: int = 64
    exposure: float = 1.0
    sampler_kind: str = "independent"

    def __post_init__(self):
        for name in ("spp", "direct_spp", "indirect_tasks", "max_path_depth",
                     "mis_samples", "rr_start", "r0", "tile"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.mis_samples < 2:
            raise ConfigError("mis_samples must be >= 2")
        if self.r0 < 2 or (self.r0 & (self.r0 - 1)) != 0:
            raise ConfigError("r0 must be a power of two >= 2")
        if self.passes is not None and self.passes < 1:
            raise ConfigError("passes must be >= 1")

    @property
    def worker_count(self):
        return self.threads if self.threads > 0 else (os.cpu_count() or 1)


def _dim_base(segment):
    return 2 + 8 * segment


def _dot_rows(a, b):
    return a[:, 0] * b[:, 0] + a[:, 1] * b[:, 1] + a[:, 2] * b[:, 2]


# ---------------------------------------------------------------------------
# next-event estimation

def _sample_lights(geom, pos, u_sel, u_a, u_b):
    """Pick a light uniformly, sample a point on it.

    Returns wl (unit, toward light), dist, ratio = Le_or_I-side factor such
    that the NEE contribution is f * cos_surface * ratio * mis_weight,
    pdf_sa (solid-angle density including the 1/n_lights pick, inf for
    delta lights), is_delta, valid.
    """
    n = len(pos)
    nl = geom.n_lights
    pick = np.minimum((u_sel * nl).astype(np.int64), nl - 1)
    wl = np.zeros((n, 3))
    dist = np.full(n, np.inf)
    ratio = np.zeros((n, 3))
    pdf_sa = np.full(n, np.inf)
    valid = np.zeros(n, dtype=bool)
    is_delta = pick < geom.n_point_lights

    if is_delta.any():
        j = pick[is_delta]
        vec = geom.point_pos[j] - pos[is_delta]
        d2 = _dot_rows(vec, vec)
        d = np.sqrt(d2)
        wl[is_delta] = vec / d[:, None]
        dist[is_delta] = d
        ratio[is_delta] = geom.point_intensity[j] * (nl / d2)[:, None]
        valid[is_delta] = d > 4 * T_EPS

    area_rows = ~is_delta
    if area_rows.any():
        k = pick[area_rows] - geom.n_point_lights
        prim = geom.area_light_prim[k]
        area = geom.area_light_area[k]
        le = geom.mat_emission[geom.area_light_mat[k]]
        y = np.zeros((int(area_rows.sum()), 3))
        n_l = np.zeros_like(y)
        ua, ub = u_a[area_rows], u_b[area_rows]
        kind_s = prim < geom.n_spheres
        kind_q = (prim >= geom.n_spheres) & (prim < geom.n_spheres + geom.n_quads)
        kind_t = prim >= geom.n_spheres + geom.n_quads
        if kind_s.any():
            i = prim[kind_s]
            z = 1.0 - 2.0 * ua[kind_s]
            r = np.sqrt(np.maximum(1.0 - z * z, 0.0))
            phi = 2.0 * np.pi * ub[kind_s]
            d_sph = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
            y[kind_s] = geom.sph_center[i] + geom.sph_radius[i][:, None] * d_sph
            n_l[kind_s] = d_sph
        if kind_q.any():
            i = prim[kind_q] - geom.n_spheres
            y[kind_q] = (geom.quad_corner[i]
                         + ua[kind_q][:, None] * geom.quad_eu[i]
                         + ub[kind_q][:, None] * geom.quad_ev[i])
            n_l[kind_q] = geom.quad_normal[i]
        if kind_t.any():
            i = prim[kind_t] - geom.n_spheres - geom.n_quads
            su = np.sqrt(ua[kind_t])
            b1 = 1.0 - su
            b2 = ub[kind_t] * su
            y[kind_t] = geom.tri_v0[i] + b1[:, None] * geom.tri_e1[i] \
                + b2[:, None] * geom.tri_e2[i]
            n_l[kind_t] = geom.tri_normal[i]
        vec = y - pos[area_rows]
        d2 = np.maximum(_dot_rows(vec, vec), 1e-24)
        d = np.sqrt(d2)
        w = vec / d[:, None]
        cos_l = -_dot_rows(n_l, w)  # one-sided: light faces the shading point
        ok = (cos_l > 1e-9) & (d > 4 * T_EPS)
        # pdf_sa = (1/nl) * (1/area) * d^2 / cos_l
        pdf = np.where(ok, d2 / np.maximum(cos_l, 1e-12) / area / nl, np.inf)
        wl[area_rows] = w
        dist[area_rows] = d
        ratio[area_rows] = np.where(ok[:, None], le / np.where(ok, pdf, 1.0)[:, None], 0.0)
        pdf_sa[area_rows] = pdf
        valid[area_rows] = ok
    return wl, dist, ratio, pdf_sa, is_delta, valid


def _nee_pdf_for_hit(geom, prim, t, cos_l):
    """Solid-angle NEE density of hitting emissive prim at distance t."""
    li = geom.prim_light_index[prim]
    area = np.where(li >= 0, geom.area_light_area[np.maximum(li, 0)], 1.0)
    pdf = t * t / np.maximum(cos_l, 1e-12) / area / max(geom.n_lights, 1)
    return np.where(li >= 0, pdf, 0.0)


# ---------------------------------------------------------------------------
# wavefront path tracer

def trace_radiance_batch(scene, origins, directions, pixel_keys, sample_keys,
                         sampler, max_depth, skip_first_emission=False,
                         rr_start=5, stats=None):
    """Radiance along -direction for a batch of rays (Eq.-1-style estimator)."""
    if max_depth < 1:
        raise ContractError("max_depth must be >= 1")
    geom = scene.geometry
    tables = geom.bsdf_tables
    env = scene.environment
    has_env = bool(np.any(env > 0))

    n = len(origins)
    L = np.zeros((n, 3))
    idx = np.arange(n)
    O = np.array(origins, dtype=np.float64)
    D = np.array(directions, dtype=np.float64)
    beta = np.ones((n, 3))
    pix = np.asarray(pixel_keys, dtype=np.uint64)
    smp = np.asarray(sample_keys, dtype=np.uint64)
    prev_pdf = np.zeros(n)
    prev_delta = np.ones(n, dtype=bool)  # camera rays pick up emission at weight 1

    for seg in range(max_depth + 1):
        if len(idx) == 0:
            break
        res = intersect_batch(geom, O, D)
        hit = res["hit"]

        if has_env and not (seg == 0 and skip_first_emission):
            miss = ~hit
            if miss.any():
                L[idx[miss]] += beta[miss] * env  # env is never NEE-sampled: weight 1

        mat = np.maximum(res["mat"], 0)
        facing = _dot_rows(res["normal"], D) < 0.0
        emit = hit & geom.mat_is_emitter[mat] & facing
        if emit.any() and not (seg == 0 and skip_first_emission):
            if seg == 0:
                w = np.ones(int(emit.sum()))
            else:
                cos_l = -_dot_rows(res["normal"][emit], D[emit])
                pdf_nee = _nee_pdf_for_hit(geom, res["prim"][emit], res["t"][emit], cos_l)
                w = np.where(prev_delta[emit], 1.0, power_heuristic(prev_pdf[emit], pdf_nee))
            L[idx[emit]] += beta[emit] * geom.mat_emission[mat[emit]] * w[:, None]

        if seg == max_depth:
            break

        # continue from surface hits
        keep = hit
        if not keep.any():
            break
        idx, O, D, beta = idx[keep], O[keep], D[keep], beta[keep]
        pix, smp = pix[keep], smp[keep]
        pos = res["position"][keep]
        n_geo = res["normal"][keep]
        mat = mat[keep]

        entering = _dot_rows(n_geo, D) < 0.0
        n_front = np.where(entering[:, None], n_geo, -n_geo)
        ft, fb, fn = build_frames_batch(n_front, scene.global_up)
        wo_world = -D
        wo_local = np.stack([_dot_rows(wo_world, ft), _dot_rows(wo_world, fb),
                             _dot_rows(wo_world, fn)], axis=1)
        base = _dim_base(seg)
        spec_mat = geom.mat_is_specular[mat]

        # --- next-event estimation at non-specular vertices
        if geom.n_lights > 0:
            do_nee = ~spec_mat
            if do_nee.any():
                u_sel = sampler.sample(pix[do_nee], smp[do_nee], base + 0)
                u_a = sampler.sample(pix[do_nee], smp[do_nee], base + 1)
                u_b = sampler.sample(pix[do_nee], smp[do_nee], base + 2)
                wl, dist, ratio, pdf_sa, is_delta, valid = _sample_lights(
                    geom, pos[do_nee], u_sel, u_a, u_b)
                wl_local = np.stack([
                    _dot_rows(wl, ft[do_nee]), _dot_rows(wl, fb[do_nee]),
                    _dot_rows(wl, fn[do_nee])], axis=1)
                cos_s = wl_local[:, 2]
                valid &= cos_s > 0.0
                if valid.any():
                    f, pdf_b = eval_batch(tables, mat[do_nee], wo_local[do_nee], wl_local)
                    contrib = f * (ratio * cos_s[:, None])
                    w = np.where(is_delta, 1.0, power_heuristic(pdf_sa, pdf_b))
                    contrib *= w[:, None]
                    valid &= np.any(contrib > 0, axis=1)
                    if valid.any():
                        rows = np.nonzero(do_nee)[0][valid]
                        shadow_o = pos[rows] + T_EPS * n_front[rows]
                        blocked = intersect_batch(
                            geom, shadow_o, wl[valid],
                            t_max=dist[valid] - 2 * T_EPS, record=False)["hit"]
                        lit = ~blocked
                        L[idx[rows[lit]]] += beta[rows[lit]] * contrib[valid][lit]

        # --- BSDF sampling for the continuation ray
        u1 = sampler.sample(pix, smp, base + 3)
        u2 = sampler.sample(pix, smp, base + 4)
        li, pdf, value, is_spec = sample_batch(tables, mat, wo_local, u1, u2, entering)
        cos_i = np.abs(li[:, 2])
        weight = np.where(is_spec[:, None], value, value * (cos_i / pdf)[:, None])
        beta = beta * weight
        wi_world = li[:, 0:1] * ft + li[:, 1:2] * fb + li[:, 2:3] * fn
        # offset to the correct side (refraction crosses the surface)
        side = np.where(li[:, 2] >= 0.0, 1.0, -1.0)
        O = pos + (T_EPS * side)[:, None] * n_front
        D = wi_world
        prev_pdf = pdf
        prev_delta = is_spec

        alive = np.any(beta > 0, axis=1) & np.all(np.isfinite(beta), axis=1)
        if seg + 1 >= rr_start:
            q = np.clip(beta.max(axis=1), RR_FLOOR, 1.0)
            u_rr = sampler.sample(pix, smp, base + 5)
            survive = u_rr < q
            beta = beta / q[:, None]
            alive &= survive
        idx, O, D, beta = idx[alive], O[alive], D[alive], beta[alive]
        pix, smp = pix[alive], smp[alive]
        prev_pdf, prev_delta = prev_pdf[alive], prev_delta[alive]

    bad = ~np.all(np.isfinite(L), axis=1)
    if bad.any():
        L[bad] = 0.0
        if stats is not None:
            stats["nonfinite"] = stats.get("nonfinite", 0) + int(bad.sum())
    return L


def li_direct_batch(scene, origins, directions, pixel_keys, sample_keys,
                    sampler, include_background=True, stats=None):
    """Depth-1 direct lighting with specular chains followed (no depth cost)."""
    geom = scene.geometry
    tables = geom.bsdf_tables
    env = scene.environment
    has_env = bool(np.any(env > 0))

    n = len(origins)
    L = np.zeros((n, 3))
    idx = np.arange(n)
    O = np.array(origins, dtype=np.float64)
    D = np.array(directions, dtype=np.float64)
    beta = np.ones((n, 3))
    pix = np.asarray(pixel_keys, dtype=np.uint64)
    smp = np.asarray(sample_keys, dtype=np.uint64)
    phase1 = np.zeros(n, dtype=bool)       # already past the shading vertex
    mis_pdf = np.zeros(n)                  # bsdf pdf awaiting MIS at first hit
    mis_live = np.zeros(n, dtype=bool)

    for seg in range(SPECULAR_CHAIN_BOUND):
        if len(idx) == 0:
            break
        res = intersect_batch(geom, O, D)
        hit = res["hit"]

        miss = ~hit
        if miss.any() and has_env:
            take = miss & (phase1 | include_background)
            if take.any():
                L[idx[take]] += beta[take] * env

        mat = np.maximum(res["mat"], 0)
        facing = _dot_rows(res["normal"], D) < 0.0
        emit = hit & geom.mat_is_emitter[mat] & facing
        if emit.any():
            w = np.ones(int(emit.sum()))
            first_mis = mis_live[emit]
            if first_mis.any():
                cos_l = -_dot_rows(res["normal"][emit], D[emit])
                pdf_nee = _nee_pdf_for_hit(geom, res["prim"][emit], res["t"][emit], cos_l)
                w = np.where(first_mis, power_heuristic(mis_pdf[emit], pdf_nee), w)
            L[idx[emit]] += beta[emit] * geom.mat_emission[mat[emit]] * w[:, None]

        spec_mat = geom.mat_is_specular[mat]
        # phase-0 rays shade at the first non-specular hit; phase-1 rays stop there
        keep = hit & (spec_mat | ~phase1)
        if not keep.any():
            break
        idx, O, D, beta = idx[keep], O[keep], D[keep], beta[keep]
        pix, smp = pix[keep], smp[keep]
        phase1 = phase1[keep]
        pos = res["position"][keep]
        n_geo = res["normal"][keep]
        mat = mat[keep]
        spec_mat = spec_mat[keep]

        entering = _dot_rows(n_geo, D) < 0.0
        n_front = np.where(entering[:, None], n_geo, -n_geo)
        ft, fb, fn = build_frames_batch(n_front, scene.global_up)
        wo_local = np.stack([_dot_rows(-D, ft), _dot_rows(-D, fb),
                             _dot_rows(-D, fn)], axis=1)
        base = _dim_base(seg)
        mis_pdf = np.zeros(len(idx))
        mis_live = np.zeros(len(idx), dtype=bool)

        shade = ~spec_mat & ~phase1
        if shade.any() and geom.n_lights > 0:
            u_sel = sampler.sample(pix[shade], smp[shade], base + 0)
            u_a = sampler.sample(pix[shade], smp[shade], base + 1)
            u_b = sampler.sample(pix[shade], smp[shade], base + 2)
            wl, dist, ratio, pdf_sa, is_delta, valid = _sample_lights(
                geom, pos[shade], u_sel, u_a, u_b)
            wl_local = np.stack([
                _dot_rows(wl, ft[shade]), _dot_rows(wl, fb[shade]),
                _dot_rows(wl, fn[shade])], axis=1)
            cos_s = wl_local[:, 2]
            valid &= cos_s > 0.0
            if valid.any():
                f, pdf_b = eval_batch(tables, mat[shade], wo_local[shade], wl_local)
                contrib = f * (ratio * cos_s[:, None])
                w = np.where(is_delta, 1.0, power_heuristic(pdf_sa, pdf_b))
                contrib *= w[:, None]
                valid &= np.any(contrib > 0, axis=1)
                if valid.any():
                    rows = np.nonzero(shade)[0][valid]
                    shadow_o = pos[rows] + T_EPS * n_front[rows]
                    blocked = intersect_batch(
                        geom, shadow_o, wl[valid],
                        t_max=dist[valid] - 2 * T_EPS, record=False)["hit"]
                    lit = ~blocked
                    L[idx[rows[lit]]] += beta[rows[lit]] * contrib[valid][lit]

        # continuation: specular chains keep walking; shading vertices fire
        # one MIS BSDF sample and become phase-1
        u1 = sampler.sample(pix, smp, base + 3)
        u2 = sampler.sample(pix, smp, base + 4)
        li, pdf, value, is_spec = sample_batch(tables, mat, wo_local, u1, u2, entering)
        cos_i = np.abs(li[:, 2])
        weight = np.where(is_spec[:, None], value, value * (cos_i / pdf)[:, None])
        beta = beta * weight
        side = np.where(li[:, 2] >= 0.0, 1.0, -1.0)
        O = pos + (T_EPS * side)[:, None] * n_front
        D = li[:, 0:1] * ft + li[:, 1:2] * fb + li[:, 2:3] * fn
        mis_live = shade & ~is_spec
        mis_pdf = np.where(mis_live, pdf, 0.0)
        phase1 = phase1 | shade

        alive = np.any(beta > SPECULAR_THROUGHPUT_CUTOFF, axis=1) \
            & np.all(np.isfinite(beta), axis=1)
        idx, O, D, beta = idx[alive], O[alive], D[alive], beta[alive]
        pix, smp = pix[alive], smp[alive]
        phase1, mis_pdf, mis_live = phase1[alive], mis_pdf[alive], mis_live[alive]

    bad = ~np.all(np.isfinite(L), axis=1)
    if bad.any():
        L[bad] = 0.0
        if stats is not None:
            stats["nonfinite"] = stats.get("nonfinite", 0) + int(bad.sum())
    return L


def primary_chain_batch(scene, origins, directions):
    """Deterministic primary-intersection chains for a ray batch.

    Mirrors reflect; transmission follows the refraction branch unless total
    internal reflection. Returns per-ray dict of arrays with `found`,
    position, normal (front-facing), mat, throughput, direction (incoming at
    the hit), escaped (True when the chain left the scene).
    """
    geom = scene.geometry
    tables = geom.bsdf_tables
    n = len(origins)
    out = {
        "found": np.zeros(n, dtype=bool),
        "escaped": np.zeros(n, dtype=bool),
        "position": np.zeros((n, 3)),
        "normal": np.zeros((n, 3)),
        "mat": np.full(n, -1, dtype=np.int64),
        "throughput": np.ones((n, 3)),
        "direction": np.array(directions, dtype=np.float64),
        "t_total": np.zeros(n),
    }
    idx = np.arange(n)
    O = np.array(origins, dtype=np.float64)
    D = np.array(directions, dtype=np.float64)
    beta = np.ones((n, 3))
    for _ in range(SPECULAR_CHAIN_BOUND):
        if len(idx) == 0:
            break
        res = intersect_batch(geom, O, D)
        hit = res["hit"]
        if (~hit).any():
            rows = idx[~hit]
            out["escaped"][rows] = True
            out["throughput"][rows] = beta[~hit]
            out["direction"][rows] = D[~hit]
        if not hit.any():
            break
        idx, O, D, beta = idx[hit], O[hit], D[hit], beta[hit]
        pos = res["position"][hit]
        n_geo = res["normal"][hit]
        mat = res["mat"][hit]
        out["t_total"][idx] += res["t"][hit]
        spec = geom.mat_is_specular[mat]

        done = ~spec
        if done.any():
            rows = idx[done]
            entering = _dot_rows(n_geo[done], D[done]) < 0.0
            out["found"][rows] = True
            out["position"][rows] = pos[done]
            out["normal"][rows] = np.where(entering[:, None], n_geo[done], -n_geo[done])
            out["mat"][rows] = mat[done]
            out["throughput"][rows] = beta[done]
            out["direction"][rows] = D[done]
        if not spec.any():
            break
        idx, pos, n_geo, mat = idx[spec], pos[spec], n_geo[spec], mat[spec]
        O, D, beta = O[spec], D[spec], beta[spec]

        entering = _dot_rows(n_geo, D) < 0.0
        n_front = np.where(entering[:, None], n_geo, -n_geo)
        cos_i = -_dot_rows(n_front, D)
        kind = tables["kind"][mat]
        albedo = tables["albedo"][mat]
        refl = D + 2.0 * cos_i[:, None] * n_front
        new_d = refl.copy()
        factor = np.ones((len(idx), 3))
        mir = kind == KIND_MIRROR
        if mir.any():
            factor[mir] = schlick(albedo[mir], cos_i[mir][:, None])
        tra = ~mir
        if tra.any():
            ior = tables["ior"][mat][tra]
            eta = np.where(entering[tra], 1.0 / ior, ior)
            ci = cos_i[tra]
            sin2_t = eta * eta * np.maximum(1.0 - ci * ci, 0.0)
            tir = sin2_t >= 1.0
            f0 = ((ior - 1.0) / (ior + 1.0)) ** 2
            fr = schlick(f0, ci)
            cos_t = np.sqrt(np.maximum(1.0 - sin2_t, 0.0))
            refr = (eta[:, None] * D[tra]
                    + (eta * ci - cos_t)[:, None] * n_front[tra])
            rows = np.nonzero(tra)[0]
            new_d[rows] = np.where(tir[:, None], refl[tra], refr)
            factor[rows] = albedo[tra] * np.where(tir, 1.0, 1.0 - fr)[:, None]
        beta = beta * factor
        to_side = np.where(_dot_rows(new_d, n_front) >= 0.0, 1.0, -1.0)
        O = pos + (T_EPS * to_side)[:, None] * n_front
        D = new_d / np.linalg.norm(new_d, axis=1, keepdims=True)
        weak = np.all(beta < SPECULAR_THROUGHPUT_CUTOFF, axis=1)
        idx, O, D, beta = idx[~weak], O[~weak], D[~weak], beta[~weak]
    return out


# ---------------------------------------------------------------------------
# scalar contract operations

def li_path(scene, ray, sampler, max_depth, skip_first_emission=False,
            pixel=0, index=0):
    """Path-traced radiance estimate along -ray.direction (single ray)."""
    return trace_radiance_batch(
        scene, ray.origin[None], ray.direction[None],
        np.array([pixel], dtype=np.uint64), np.array([index], dtype=np.uint64),
        sampler, max_depth, skip_first_emission=skip_first_emission)[0]


def li_direct(scene, ray, sampler, pixel=0, index=0, include_background=True):
    """Direct illumination estimate (single ray)."""
    return li_direct_batch(
        scene, ray.origin[None], ray.direction[None],
        np.array([pixel], dtype=np.uint64), np.array([index], dtype=np.uint64),
        sampler, include_background=include_background)[0]


def find_primary_intersection(scene, ray):
    """First non-specular hit following mirror/transmission chains.

    Returns dict(hit, throughput, direction) or None. The hit's normal is
    front-facing toward the incoming chain direction.
    """
    res = primary_chain_batch(scene, ray.origin[None], ray.direction[None])
    if not res["found"][0]:
        return None
    mat = int(res["mat"][0])
    material = scene.materials[mat]
    hit = Hit(
        position=res["position"][0],
        normal=res["normal"][0],
        distance=float(res["t_total"][0]),
        material_id=mat,
        is_emitter=material.is_emitter,
        emitted=np.array(material.emission, dtype=np.float64),
    )
    return {"hit": hit, "throughput": res["throughput"][0],
            "direction": res["direction"][0]}


def shade_indirect(scene, hit, radmap, frame, wo, sampler, mis_samples, key=0):
    """Estimate the map-lit reflection integral at a cached intersection.

    Half the samples come from the map's 2D distribution, half from the
    BSDF, combined with the beta=2 power heuristic. The map is treated as
    perfectly visible.
    """
    if mis_samples < 2:
        raise ConfigError("mis_samples must be >= 2")
    material = scene.materials[hit.material_id]
    if material.is_specular:
        raise ContractError("shade_indirect requires a non-specular material")
    tables = scene.geometry.bsdf_tables
    dist = build_map_distribution(radmap)
    n_map = mis_samples // 2
    n_bsdf = mis_samples - n_map
    wo_local = frame.to_local(np.asarray(wo, dtype=np.float64))
    key = np.uint64(key)

    total = np.zeros(3)
    # map-distribution draws
    i = np.arange(n_map)
    u1 = sampler.sample(key, i, SHADE_DIM_BASE + 0)
    u2 = sampler.sample(key, i, SHADE_DIM_BASE + 1)
    s = sample_map(dist, radmap, frame, (u1, u2))
    li_local = frame.to_local(s["dir"])
    mats = np.full(n_map, hit.material_id)
    f, pdf_b = eval_batch(tables, mats, np.broadcast_to(wo_local, (n_map, 3)), li_local)
    cos_i = np.maximum(li_local[:, 2], 0.0)
    w = power_heuristic(s["pdf"], pdf_b)
    contrib = f * s["radiance"] * (w * cos_i / s["pdf"])[:, None]
    total += contrib.sum(axis=0) / n_map

    # BSDF draws
    i = np.arange(n_bsdf)
    u1 = sampler.sample(key, i, SHADE_DIM_BASE + 2)
    u2 = sampler.sample(key, i, SHADE_DIM_BASE + 3)
    mats = np.full(n_bsdf, hit.material_id)
    li, pdf, value, _ = sample_batch(
        tables, mats, np.broadcast_to(wo_local, (n_bsdf, 3)), u1, u2,
        np.ones(n_bsdf, dtype=bool))
    radiance = map_lookup(radmap, li)
    pdf_m = map_pdf(dist, li)
    cos_i = np.maximum(li[:, 2], 0.0)
    w = power_heuristic(pdf, pdf_m)
    contrib = value * radiance * (w * cos_i / pdf)[:, None]
    total += contrib.sum(axis=0) / n_bsdf

    if not np.all(np.isfinite(total)):
        total = np.zeros(3)
    return total


# ---------------------------------------------------------------------------
# full-frame rendering

def _camera_rays(scene, sampler, xs, ys, sample_idx, jitter=True):
    """Primary rays for pixel index arrays (flat) at one sample index."""
    w, _ = scene.camera.resolution
    pix = (ys * w + xs).astype(np.uint64)
    smp = np.full(len(xs), sample_idx, dtype=np.uint64)
    if jitter:
        jx = sampler.sample(pix, smp, 0)
        jy = sampler.sample(pix, smp, 1)
    else:
        jx = jy = 0.5
    dirs = scene.camera.ray_directions(xs + jx, ys + jy)
    origins = np.broadcast_to(scene.camera.position, dirs.shape)
    return origins, dirs, pix, smp


WAVE_TARGET = 16384  # rays per wavefront; the numpy sweet spot


def _camera_wave(scene, sampler, xs, ys, s0, ns, jitter=True):
    """Rays for all tile pixels at sample indices s0..s0+ns (one wave)."""
    w, _ = scene.camera.resolution
    n = len(xs)
    pix = np.tile((ys * w + xs).astype(np.uint64), ns)
    smp = np.repeat(np.arange(s0, s0 + ns, dtype=np.uint64), n)
    txs = np.tile(xs, ns)
    tys = np.tile(ys, ns)
    if jitter:
        jx = sampler.sample(pix, smp, 0)
        jy = sampler.sample(pix, smp, 1)
    else:
        jx = jy = 0.5
    dirs = scene.camera.ray_directions(txs + jx, tys + jy)
    origins = np.broadcast_to(scene.camera.position, dirs.shape)
    return origins, dirs, pix, smp


def _iter_tiles(w, h, tile):
    for ty in range(0, h, tile):
        for tx in range(0, w, tile):
            yield tx, ty, min(tx + tile, w), min(ty + tile, h)


def render(scene, config, mode="pt", weights=None, interrupt=None):
    """Render a full frame. Returns (image HxWx3 float64, telemetry dict).

    Modes: "pt" (path tracing at config.spp), "direct" (depth-1 pass at
    config.direct_spp), "drc" (direct pass + cached indirect layer; needs
    a loaded weights Network).
    """
    if mode not in ("pt", "direct", "drc"):
        raise ConfigError(f"unknown render mode {mode!r}")
    if mode == "drc":
        from .cache import render_drc

        if weights is None:
            raise ConfigError("drc mode requires a weights network")
        return render_drc(scene, config, weights, interrupt=interrupt)

    w, h = scene.camera.resolution
    if w < 1 or h < 1:
        raise ConfigError("camera resolution must be positive")
    spp = config.spp if mode == "pt" else config.direct_spp
    sampler = Sampler(config.sampler_kind, config.seed, spp)
    stats = {}
    start = time.time()
    image = np.zeros((h, w, 3))

    def run_tile(bounds):
        tx, ty, tx1, ty1 = bounds
        xs, ys = np.meshgrid(np.arange(tx, tx1), np.arange(ty, ty1))
        xs, ys = xs.ravel().astype(np.float64), ys.ravel().astype(np.float64)
        n = len(xs)
        chunk = max(1, WAVE_TARGET // n)
        acc = np.zeros((n, 3))
        for s0 in range(0, spp, chunk):
            ns = min(chunk, spp - s0)
            O, D, pix, smp = _camera_wave(scene, sampler, xs, ys, s0, ns)
            if mode == "pt":
                L = trace_radiance_batch(
                    scene, O, D, pix, smp, sampler,
                    max_depth=config.max_path_depth, rr_start=config.rr_start,
                    stats=stats)
            else:
                L = li_direct_batch(scene, O, D, pix, smp, sampler, stats=stats)
            acc += L.reshape(ns, n, 3).sum(axis=0)
        image[ty:ty1, tx:tx1] = (acc / spp).reshape(ty1 - ty, tx1 - tx, 3)

    tiles = list(_iter_tiles(w, h, config.tile))
    workers = config.worker_count
    if workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for t in tiles:
            run_tile(t)

    telemetry = {
        "mode": mode,
        "spp": spp,
        "seconds": time.time() - start,
        "nonfinite": stats.get("nonfinite", 0),
    }
    return image, telemetry
