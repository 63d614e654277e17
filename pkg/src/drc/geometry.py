"""Ray-scene intersection: primitive tables, batch kernels and a SAH BVH.

Two intersection paths exist and are bound together by an equivalence
oracle in the tests:

* `intersect` walks a binned-SAH BVH for a single ray (the contract op);
* `intersect_batch` runs vectorized per-primitive-type scans over ray
  batches (what the wavefront integrator uses; at desk scene sizes a
  numpy BVH walk loses to the linear scan).

Both report the nearest hit with distance in (t_min, t_max].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scene import Mesh, Quad, Sphere

T_EPS = 1e-4  # default ray offset / minimum hit distance, scenes are meter-scale


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = T_EPS
    t_max: float = np.inf

    def __post_init__(self):
        if not (self.t_min >= 0 and self.t_min < self.t_max):
            raise ValueError("ray requires 0 <= t_min < t_max")


@dataclass(frozen=True)
class Hit:
    position: np.ndarray
    normal: np.ndarray  # geometric, not flipped
    distance: float
    material_id: int
    is_emitter: bool
    emitted: np.ndarray
    prim: int = -1


class Geometry:
    """Struct-of-arrays primitive tables plus light lookup tables."""

    def __init__(self, scene):
        self.scene = scene
        spheres, quads, tris = [], [], []
        s_mat, q_mat, t_mat = [], [], []
        for shape in scene.shapes:
            mat = scene.material_index(shape.material)
            if isinstance(shape, Sphere):
                spheres.append((shape.center, shape.radius))
                s_mat.append(mat)
            elif isinstance(shape, Quad):
                quads.append((shape.corner, shape.edge_u, shape.edge_v))
                q_mat.append(mat)
            elif isinstance(shape, Mesh):
                v = shape.vertices
                for tri in shape.triangles:
                    tris.append((v[tri[0]], v[tri[1]], v[tri[2]]))
                    t_mat.append(mat)

        self.sph_center = np.array([s[0] for s in spheres]).reshape(-1, 3)
        self.sph_radius = np.array([s[1] for s in spheres], dtype=np.float64)
        self.sph_radius2 = self.sph_radius * self.sph_radius
        self.sph_mat = np.array(s_mat, dtype=np.int64)

        self.quad_corner = np.array([q[0] for q in quads]).reshape(-1, 3)
        self.quad_eu = np.array([q[1] for q in quads]).reshape(-1, 3)
        self.quad_ev = np.array([q[2] for q in quads]).reshape(-1, 3)
        self.quad_mat = np.array(q_mat, dtype=np.int64)
        n = np.cross(self.quad_eu, self.quad_ev)
        self.quad_area = np.linalg.norm(n, axis=1)
        self.quad_normal = n / np.maximum(self.quad_area[:, None], 1e-300)
        # inverse Gram matrix terms for barycentric solve
        g11 = np.einsum("ij,ij->i", self.quad_eu, self.quad_eu)
        g22 = np.einsum("ij,ij->i", self.quad_ev, self.quad_ev)
        g12 = np.einsum("ij,ij->i", self.quad_eu, self.quad_ev)
        det = np.maximum(g11 * g22 - g12 * g12, 1e-300)
        self.quad_inv = np.stack([g22 / det, -g12 / det, g11 / det], axis=1)
        # plane offsets and corner projections (shared by both hit kernels)
        self.quad_d = _dot3(self.quad_corner, self.quad_normal)
        self.quad_ceu = _dot3(self.quad_corner, self.quad_eu)
        self.quad_cev = _dot3(self.quad_corner, self.quad_ev)

        self.tri_v0 = np.array([t[0] for t in tris]).reshape(-1, 3)
        self.tri_e1 = np.array([t[1] for t in tris]).reshape(-1, 3) - self.tri_v0
        self.tri_e2 = np.array([t[2] for t in tris]).reshape(-1, 3) - self.tri_v0
        self.tri_mat = np.array(t_mat, dtype=np.int64)
        tn = np.cross(self.tri_e1, self.tri_e2)
        self.tri_area = 0.5 * np.linalg.norm(tn, axis=1)
        self.tri_normal = tn / np.maximum(np.linalg.norm(tn, axis=1)[:, None], 1e-300)

        self.n_spheres = len(self.sph_radius)
        self.n_quads = len(self.quad_mat)
        self.n_tris = len(self.tri_mat)
        self.n_prims = self.n_spheres + self.n_quads + self.n_tris

        self.mat_emission = np.array([m.emission for m in scene.materials]).reshape(-1, 3)
        self.mat_is_emitter = np.array([m.is_emitter for m in scene.materials], dtype=bool)
        self.mat_is_specular = np.array([m.is_specular for m in scene.materials], dtype=bool)

        self._build_light_table()
        self._bvh = None

    # global prim ids: [spheres | quads | triangles]
    def prim_kind(self, prim):
        if prim < self.n_spheres:
            return "sphere", prim
        prim -= self.n_spheres
        if prim < self.n_quads:
            return "quad", prim
        return "triangle", prim - self.n_quads

    def _build_light_table(self):
        """Emissive primitives + point lights, picked uniformly by NEE."""
        scene = self.scene
        prim_mats = np.concatenate([self.sph_mat, self.quad_mat, self.tri_mat]) \
            if self.n_prims else np.zeros(0, dtype=np.int64)
        emissive = np.nonzero(self.mat_is_emitter[prim_mats])[0] if self.n_prims else []
        self.area_light_prim = np.asarray(emissive, dtype=np.int64)
        areas = []
        for p in self.area_light_prim:
            kind, i = self.prim_kind(int(p))
            if kind == "sphere":
                areas.append(4.0 * np.pi * self.sph_radius[i] ** 2)
            elif kind == "quad":
                areas.append(self.quad_area[i])
            else:
                areas.append(self.tri_area[i])
        self.area_light_area = np.asarray(areas, dtype=np.float64)
        self.area_light_mat = prim_mats[self.area_light_prim] if len(self.area_light_prim) \
            else np.zeros(0, dtype=np.int64)
        # map prim id -> index in the area-light table (-1 if not a light)
        self.prim_light_index = np.full(max(self.n_prims, 1), -1, dtype=np.int64)
        self.prim_light_index[self.area_light_prim] = np.arange(len(self.area_light_prim))
        self.n_point_lights = len(scene.point_lights)
        self.n_lights = self.n_point_lights + len(self.area_light_prim)
        if self.n_point_lights:
            self.point_pos = np.array([l.position for l in scene.point_lights])
            self.point_intensity = np.array([l.intensity for l in scene.point_lights])
        else:
            self.point_pos = np.zeros((0, 3))
            self.point_intensity = np.zeros((0, 3))

    @property
    def bvh(self):
        if self._bvh is None:
            self._bvh = BVH(self)
        return self._bvh

    @property
    def bsdf_tables(self):
        t = getattr(self, "_bsdf_tables", None)
        if t is None:
            from .bsdf import material_tables

            t = material_tables(self.scene.materials)
            self._bsdf_tables = t
        return t

    def prim_aabbs(self):
        lo = np.empty((self.n_prims, 3))
        hi = np.empty((self.n_prims, 3))
        s = self.n_spheres
        lo[:s] = self.sph_center - self.sph_radius[:, None]
        hi[:s] = self.sph_center + self.sph_radius[:, None]
        q = self.n_quads
        if q:
            c = self.quad_corner
            pts = np.stack([c, c + self.quad_eu, c + self.quad_ev,
                            c + self.quad_eu + self.quad_ev])
            lo[s:s + q] = pts.min(axis=0)
            hi[s:s + q] = pts.max(axis=0)
        if self.n_tris:
            pts = np.stack([self.tri_v0, self.tri_v0 + self.tri_e1, self.tri_v0 + self.tri_e2])
            lo[s + q:] = pts.min(axis=0)
            hi[s + q:] = pts.max(axis=0)
        return lo, hi


# ---------------------------------------------------------------------------
# batch intersection (vectorized linear scan, one kernel per primitive type)
#
# Dot products are written out componentwise so the scalar BVH path and the
# vectorized path perform bit-identical IEEE operations; the equivalence
# oracle compares them exactly.

def _dot3(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _improves(t, prim, best_t, best_prim):
    # nearest wins; exact ties go to the lowest primitive id (order-free)
    tie_ok = (best_prim < 0) | (prim < best_prim)
    return (t < best_t) | ((t == best_t) & tie_ok)


def _merge_candidates(best_t, best_prim, t, prim_offset):
    """Fold per-type candidate hits (t: (N,P), +inf = miss) into the running
    best. Ties resolve to the lowest primitive id, matching _improves."""
    if t.shape[1] == 0:
        return best_t, best_prim
    j = np.argmin(t, axis=1)  # first minimal index = lowest prim id
    tt = t[np.arange(len(t)), j]
    prim = prim_offset + j
    ok = np.isfinite(tt) & _improves(tt, prim, best_t, best_prim)
    return np.where(ok, tt, best_t), np.where(ok, prim, best_prim)


def intersect_batch(geom, origins, directions, t_min=T_EPS, t_max=np.inf,
                    record=True):
    """Nearest-hit query for N rays at once (vectorized over primitives too).

    Returns a dict of arrays: hit (bool), t, prim, mat, position, normal.
    With record=False only hit/t/prim are filled (shadow-ray fast path).
    """
    O = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    D = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    n = len(O)
    t_lo = np.broadcast_to(np.asarray(t_min, dtype=np.float64), (n,))[:, None]
    t_hi = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,))
    best_t = np.array(t_hi, dtype=np.float64)
    best_prim = np.full(n, -1, dtype=np.int64)
    t_hi = t_hi[:, None]

    if geom.n_spheres:
        oc = O[:, None, :] - geom.sph_center[None, :, :]
        dd = D[:, None, :]
        b = _dot3(oc, dd)
        c = _dot3(oc, oc) - geom.sph_radius2[None, :]
        disc = b * b - c
        ok = disc >= 0.0
        sq = np.sqrt(np.where(ok, disc, 0.0))
        t0 = -b - sq
        t1 = -b + sq
        t = np.where(t0 > t_lo, t0, t1)
        ok &= (t > t_lo) & (t <= t_hi)
        best_t, best_prim = _merge_candidates(best_t, best_prim,
                                              np.where(ok, t, np.inf), 0)

    if geom.n_quads:
        oo = O[:, None, :]
        dd = D[:, None, :]
        denom = _dot3(dd, geom.quad_normal[None, :, :])
        active = np.abs(denom) > 1e-12
        t = np.where(active,
                     (geom.quad_d[None, :] - _dot3(oo, geom.quad_normal[None, :, :]))
                     / np.where(active, denom, 1.0),
                     np.inf)
        ok = active & (t > t_lo) & (t <= t_hi)
        ts = np.where(ok, t, 0.0)
        meu = (_dot3(oo, geom.quad_eu[None, :, :]) - geom.quad_ceu[None, :]) \
            + ts * _dot3(dd, geom.quad_eu[None, :, :])
        mev = (_dot3(oo, geom.quad_ev[None, :, :]) - geom.quad_cev[None, :]) \
            + ts * _dot3(dd, geom.quad_ev[None, :, :])
        iuu, iuv, ivv = geom.quad_inv.T
        a = iuu[None, :] * meu + iuv[None, :] * mev
        b2 = iuv[None, :] * meu + ivv[None, :] * mev
        ok &= (a >= 0.0) & (a <= 1.0) & (b2 >= 0.0) & (b2 <= 1.0)
        best_t, best_prim = _merge_candidates(best_t, best_prim,
                                              np.where(ok, t, np.inf),
                                              geom.n_spheres)

    if geom.n_tris:
        dd = D[:, None, :]
        pv = np.cross(dd, geom.tri_e2[None, :, :])
        det = _dot3(pv, geom.tri_e1[None, :, :])
        active = np.abs(det) > 1e-14
        inv = 1.0 / np.where(active, det, 1.0)
        tv = O[:, None, :] - geom.tri_v0[None, :, :]
        u = _dot3(tv, pv) * inv
        qv = np.cross(tv, geom.tri_e1[None, :, :])
        v = _dot3(qv, dd) * inv
        t = _dot3(qv, geom.tri_e2[None, :, :]) * inv
        ok = active & (u >= 0.0) & (u <= 1.0) & (v >= 0.0) & (u + v <= 1.0)
        ok &= (t > t_lo) & (t <= t_hi)
        best_t, best_prim = _merge_candidates(best_t, best_prim,
                                              np.where(ok, t, np.inf),
                                              geom.n_spheres + geom.n_quads)

    hit = best_prim >= 0
    if not record:
        return {"hit": hit, "t": np.where(hit, best_t, np.inf), "prim": best_prim}
    pos = O + np.where(hit, best_t, 0.0)[:, None] * D
    normal = np.zeros((n, 3))
    mat = np.full(n, -1, dtype=np.int64)
    if hit.any():
        prim = best_prim[hit]
        is_s = prim < geom.n_spheres
        is_q = (prim >= geom.n_spheres) & (prim < geom.n_spheres + geom.n_quads)
        is_t = prim >= geom.n_spheres + geom.n_quads
        nrm = np.zeros((int(hit.sum()), 3))
        m = np.zeros(int(hit.sum()), dtype=np.int64)
        if is_s.any():
            si = prim[is_s]
            nrm[is_s] = (pos[hit][is_s] - geom.sph_center[si]) / geom.sph_radius[si][:, None]
            m[is_s] = geom.sph_mat[si]
        if is_q.any():
            qi = prim[is_q] - geom.n_spheres
            nrm[is_q] = geom.quad_normal[qi]
            m[is_q] = geom.quad_mat[qi]
        if is_t.any():
            ti = prim[is_t] - geom.n_spheres - geom.n_quads
            nrm[is_t] = geom.tri_normal[ti]
            m[is_t] = geom.tri_mat[ti]
        normal[hit] = nrm
        mat[hit] = m
    return {
        "hit": hit,
        "t": np.where(hit, best_t, np.inf),
        "prim": best_prim,
        "mat": mat,
        "position": pos,
        "normal": normal,
    }


def occluded_batch(geom, origins, directions, t_max):
    """Any-hit query used for shadow rays."""
    res = intersect_batch(geom, origins, directions, t_min=T_EPS, t_max=t_max,
                          record=False)
    return res["hit"]


# ---------------------------------------------------------------------------
# BVH: binned SAH over primitive AABBs, leaf size <= 4

class BVH:
    LEAF_SIZE = 4
    N_BINS = 16

    def __init__(self, geom):
        self.geom = geom
        lo, hi = geom.prim_aabbs()
        self.prim_lo, self.prim_hi = lo, hi
        centroids = 0.5 * (lo + hi)
        order = np.arange(geom.n_prims)

        node_lo, node_hi = [], []
        left, right = [], []
        start, count, axis = [], [], []

        def new_node():
            node_lo.append(np.zeros(3))
            node_hi.append(np.zeros(3))
            left.append(-1)
            right.append(-1)
            start.append(-1)
            count.append(0)
            axis.append(0)
            return len(node_lo) - 1

        def build(ids):
            node = new_node()
            node_lo[node] = lo[ids].min(axis=0) if len(ids) else np.zeros(3)
            node_hi[node] = hi[ids].max(axis=0) if len(ids) else np.zeros(3)
            if len(ids) <= self.LEAF_SIZE:
                start[node] = len(self.prim_order)
                count[node] = len(ids)
                self.prim_order.extend(int(i) for i in ids)
                return node
            clo = centroids[ids].min(axis=0)
            chi = centroids[ids].max(axis=0)
            extent = chi - clo
            ax = int(np.argmax(extent))
            axis[node] = ax
            split = None
            if extent[ax] > 1e-12:
                rel = (centroids[ids, ax] - clo[ax]) / extent[ax]
                bins = np.minimum((rel * self.N_BINS).astype(np.int64), self.N_BINS - 1)
                best_cost, best_bin = np.inf, -1
                for b in range(1, self.N_BINS):
                    in_l = bins < b
                    nl = int(in_l.sum())
                    nr = len(ids) - nl
                    if nl == 0 or nr == 0:
                        continue
                    l_ids, r_ids = ids[in_l], ids[~in_l]
                    sal = _surface(lo[l_ids].min(0), hi[l_ids].max(0))
                    sar = _surface(lo[r_ids].min(0), hi[r_ids].max(0))
                    cost = sal * nl + sar * nr
                    if cost < best_cost:
                        best_cost, best_bin = cost, b
                if best_bin >= 0:
                    split = bins < best_bin
            if split is None:
                # degenerate spread: median split keeps the tree balanced
                med = np.argsort(centroids[ids, ax], kind="stable")
                half = len(ids) // 2
                split = np.zeros(len(ids), dtype=bool)
                split[med[:half]] = True
            l = build(ids[split])
            r = build(ids[~split])
            left[node], right[node] = l, r
            return node

        self.prim_order = []
        import sys

        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 10000))
        try:
            self.root = build(order) if geom.n_prims else -1
        finally:
            sys.setrecursionlimit(limit)
        self.node_lo = np.array(node_lo).reshape(-1, 3)
        self.node_hi = np.array(node_hi).reshape(-1, 3)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.start = np.array(start, dtype=np.int64)
        self.count = np.array(count, dtype=np.int64)
        self.axis = np.array(axis, dtype=np.int64)
        self.order = np.array(self.prim_order, dtype=np.int64)

    def intersect(self, origin, direction, t_min, t_max):
        """Single-ray nearest-hit traversal. Returns (t, prim) or (inf, -1)."""
        if self.root < 0:
            return np.inf, -1
        geom = self.geom
        O = np.asarray(origin, dtype=np.float64)
        D = np.asarray(direction, dtype=np.float64)
        inv = 1.0 / np.where(np.abs(D) > 1e-300, D, 1e-300)
        neg = inv < 0
        best_t, best_prim = t_max, -1
        stack = [self.root]
        while stack:
            node = stack.pop()
            t0 = (self.node_lo[node] - O) * inv
            t1 = (self.node_hi[node] - O) * inv
            near = np.where(neg, t1, t0)
            far = np.where(neg, t0, t1)
            enter = max(near.max(), t_min)
            exit_ = min(far.min(), best_t)
            if enter > exit_:
                continue
            if self.count[node] > 0:
                s, c = self.start[node], self.count[node]
                for prim in self.order[s:s + c]:
                    prim = int(prim)
                    t = _prim_hit_t(geom, prim, O, D, t_min, best_t)
                    if t is not None and _improves(t, prim, best_t, best_prim):
                        best_t, best_prim = t, prim
            else:
                l, r = self.left[node], self.right[node]
                if neg[self.axis[node]]:
                    stack.append(int(l))
                    stack.append(int(r))
                else:
                    stack.append(int(r))
                    stack.append(int(l))
        if best_prim < 0:
            return np.inf, -1
        return best_t, best_prim


def _surface(lo, hi):
    d = np.maximum(hi - lo, 0.0)
    return 2.0 * (d[0] * d[1] + d[1] * d[2] + d[0] * d[2])


def _prim_hit_t(geom, prim, O, D, t_min, t_best):
    """Scalar primitive test, bit-identical to the batch kernels.

    Returns t with t_min < t <= t_best, or None.
    """
    kind, i = geom.prim_kind(prim)
    if kind == "sphere":
        oc = O - geom.sph_center[i]
        b = float(_dot3(oc, D))
        c = float(_dot3(oc, oc)) - geom.sph_radius2[i]
        disc = b * b - c
        if disc < 0.0:
            return None
        sq = np.sqrt(disc)
        t = -b - sq
        if t <= t_min:
            t = -b + sq
        if t_min < t <= t_best:
            return float(t)
        return None
    if kind == "quad":
        nrm = geom.quad_normal[i]
        denom = float(_dot3(D, nrm))
        if abs(denom) <= 1e-12:
            return None
        t = (geom.quad_d[i] - float(_dot3(O, nrm))) / denom
        if not (t_min < t <= t_best):
            return None
        meu = (float(_dot3(O, geom.quad_eu[i])) - geom.quad_ceu[i]) \
            + t * float(_dot3(D, geom.quad_eu[i]))
        mev = (float(_dot3(O, geom.quad_ev[i])) - geom.quad_cev[i]) \
            + t * float(_dot3(D, geom.quad_ev[i]))
        iuu, iuv, ivv = geom.quad_inv[i]
        a = iuu * meu + iuv * mev
        b2 = iuv * meu + ivv * mev
        if 0.0 <= a <= 1.0 and 0.0 <= b2 <= 1.0:
            return t
        return None
    e1, e2 = geom.tri_e1[i], geom.tri_e2[i]
    pv = np.cross(D, e2)
    det = float(_dot3(pv, e1))
    if abs(det) <= 1e-14:
        return None
    inv = 1.0 / det
    tv = O - geom.tri_v0[i]
    u = float(_dot3(tv, pv)) * inv
    if u < 0.0 or u > 1.0:
        return None
    qv = np.cross(tv, e1)
    v = float(_dot3(qv, D)) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = float(_dot3(qv, e2)) * inv
    if t_min < t <= t_best:
        return t
    return None


def _hit_from_prim(geom, prim, O, D, t):
    pos = O + t * D
    kind, i = geom.prim_kind(prim)
    if kind == "sphere":
        normal = (pos - geom.sph_center[i]) / geom.sph_radius[i]
        mat = int(geom.sph_mat[i])
    elif kind == "quad":
        normal = geom.quad_normal[i]
        mat = int(geom.quad_mat[i])
    else:
        normal = geom.tri_normal[i]
        mat = int(geom.tri_mat[i])
    return Hit(
        position=pos,
        normal=np.array(normal, dtype=np.float64),
        distance=float(t),
        material_id=mat,
        is_emitter=bool(geom.mat_is_emitter[mat]),
        emitted=geom.mat_emission[mat].copy(),
        prim=prim,
    )


def intersect(scene, ray):
    """Nearest hit of a single ray against the scene, or None (BVH path)."""
    geom = scene.geometry
    t, prim = geom.bvh.intersect(ray.origin, ray.direction, ray.t_min, ray.t_max)
    if prim < 0:
        return None
    return _hit_from_prim(geom, prim, np.asarray(ray.origin, dtype=np.float64),
                          np.asarray(ray.direction, dtype=np.float64), t)


def intersect_linear(scene, ray):
    """Exhaustive linear-scan reference used by the equivalence oracle."""
    geom = scene.geometry
    res = intersect_batch(geom, ray.origin[None], ray.direction[None],
                          t_min=ray.t_min, t_max=ray.t_max)
    if not res["hit"][0]:
        return None
    return _hit_from_prim(geom, int(res["prim"][0]),
                          np.asarray(ray.origin, dtype=np.float64),
                          np.asarray(ray.direction, dtype=np.float64),
                          float(res["t"][0]))
