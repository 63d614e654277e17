"""Shading frames and BSDF evaluation/sampling.

Material models:
  diffuse      Lambertian, albedo/pi
  glossy       normalized Phong lobe around the mirror direction,
               exponent = 2/roughness^2 - 2, normalization (e+2)/(2pi)
  mirror       delta; Schlick Fresnel with F0 = albedo
  transmission delta; Schlick dielectric Fresnel from ior, albedo tint

Frames are right-handed orthonormal bases with z = shading normal. The
frame's reference up is the scene's global up unless the normal is within
1e-4 of (anti)parallel to it, in which case the reference up is rotated 90
degrees toward the global Y axis before orthogonalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError

KIND_DIFFUSE, KIND_GLOSSY, KIND_MIRROR, KIND_TRANSMISSION = 0, 1, 2, 3
_KIND_CODE = {"diffuse": 0, "glossy": 1, "mirror": 2, "transmission": 3}

UP_DEGENERACY = 1.0 - 1e-4


@dataclass(frozen=True)
class Frame:
    t: np.ndarray
    b: np.ndarray
    n: np.ndarray

    def to_local(self, v):
        v = np.asarray(v, dtype=np.float64)
        return np.stack([v @ self.t, v @ self.b, v @ self.n], axis=-1)

    def to_world(self, v):
        v = np.asarray(v, dtype=np.float64)
        return (v[..., 0:1] * self.t + v[..., 1:2] * self.b + v[..., 2:3] * self.n)


def _rotated_up(up):
    # rotate the up vector 90 degrees toward the global Y axis: the result is
    # the orthogonal completion of Y against up (X axis as final fallback)
    for axis in (np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])):
        w = axis - (axis @ up) * up
        norm = np.linalg.norm(w)
        if norm > 1e-6:
            return w / norm
    return np.array([0.0, 0.0, 1.0])


def _reference_up(normal, global_up):
    up = np.asarray(global_up, dtype=np.float64)
    if abs(float(normal @ up)) <= UP_DEGENERACY:
        return up
    return _rotated_up(up)


def build_frame(normal, global_up):
    """Right-handed orthonormal frame with z = normal."""
    n = np.asarray(normal, dtype=np.float64)
    ref = _reference_up(n, global_up)
    t = np.cross(ref, n)
    norm = np.linalg.norm(t)
    if norm < 1e-9:  # ref still parallel after the rule; pick any perpendicular
        ref = _reference_up(n, np.array([1.0, 0.0, 0.0]))
        t = np.cross(ref, n)
        norm = np.linalg.norm(t)
    t = t / norm
    b = np.cross(n, t)
    return Frame(t=t, b=b, n=n)


def build_frames_batch(normals, global_up):
    """Vectorized build_frame over (N,3) normals; returns (t, b, n) arrays."""
    n = np.atleast_2d(np.asarray(normals, dtype=np.float64))
    up = np.asarray(global_up, dtype=np.float64)
    count = len(n)
    ref = np.broadcast_to(up, (count, 3)).copy()
    degen = np.abs(n @ up) > UP_DEGENERACY
    if degen.any():
        ref[degen] = _rotated_up(up)
    t = np.cross(ref, n)
    norm = np.linalg.norm(t, axis=1, keepdims=True)
    bad = norm[:, 0] < 1e-9
    if bad.any():
        alt = np.cross(np.array([1.0, 0.0, 0.0]), n[bad])
        t[bad] = alt
        norm[bad] = np.linalg.norm(alt, axis=1, keepdims=True)
    t = t / norm
    b = np.cross(n, t)
    return t, b, n


def reflect(wo_local):
    w = np.asarray(wo_local, dtype=np.float64)
    out = w.copy()
    out[..., 0] *= -1.0
    out[..., 1] *= -1.0
    return out


def schlick(f0, cos_theta):
    c = np.clip(cos_theta, 0.0, 1.0)
    return f0 + (1.0 - f0) * (1.0 - c) ** 5


def material_tables(materials):
    """Pack material parameters into arrays for the batch kernels."""
    m = len(materials)
    kind = np.zeros(m, dtype=np.int64)
    albedo = np.zeros((m, 3))
    exponent = np.zeros(m)
    ior = np.ones(m)
    for i, mat in enumerate(materials):
        kind[i] = _KIND_CODE[mat.kind]
        albedo[i] = mat.albedo
        exponent[i] = mat.phong_exponent if mat.kind == "glossy" else 0.0
        ior[i] = mat.ior if mat.ior else 1.0
    return {"kind": kind, "albedo": albedo, "exponent": exponent, "ior": ior}


# ---------------------------------------------------------------------------
# scalar contract operations

def eval_bsdf(material, frame, wo, wi):
    """Reflectance density (1/sr) for non-specular materials."""
    if material.is_specular:
        raise ContractError(f"eval_bsdf called on specular material {material.name!r}")
    lo = frame.to_local(wo)
    li = frame.to_local(wi)
    if lo[2] <= 0.0 or li[2] <= 0.0:
        return np.zeros(3)
    if material.kind == "diffuse":
        return material.albedo / np.pi
    e = material.phong_exponent
    cos_a = max(float(reflect(lo) @ li), 0.0)
    return material.albedo * (e + 2.0) / (2.0 * np.pi) * cos_a ** e


def pdf_bsdf(material, frame, wo, wi):
    """Solid-angle density of sample_bsdf for non-specular materials."""
    lo = frame.to_local(wo)
    li = frame.to_local(wi)
    if material.kind == "diffuse":
        return max(li[2], 0.0) / np.pi
    if material.kind == "glossy":
        e = material.phong_exponent
        cos_a = max(float(reflect(lo) @ li), 0.0)
        return (e + 1.0) / (2.0 * np.pi) * cos_a ** e
    return 0.0


def sample_cosine(u1, u2):
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    return np.array([r * np.cos(phi), r * np.sin(phi), np.sqrt(max(1.0 - u1, 0.0))])


def sample_bsdf(material, frame, wo, u, entering=True):
    """Draw an incident direction.

    Returns dict(wi, pdf, value, is_specular). For specular kinds `value`
    is the delta throughput (value/pdf with pdf = 1).
    """
    u1, u2 = u
    lo = frame.to_local(wo)
    if material.kind == "diffuse":
        li = sample_cosine(u1, u2)
        wi = frame.to_world(li)
        pdf = li[2] / np.pi
        value = material.albedo / np.pi if lo[2] > 0.0 else np.zeros(3)
        return {"wi": wi, "pdf": max(pdf, 1e-12), "value": value, "is_specular": False}
    if material.kind == "glossy":
        e = material.phong_exponent
        cos_a = u1 ** (1.0 / (e + 1.0))
        sin_a = np.sqrt(max(1.0 - cos_a * cos_a, 0.0))
        phi = 2.0 * np.pi * u2
        lobe = np.array([sin_a * np.cos(phi), sin_a * np.sin(phi), cos_a])
        r = reflect(lo)
        rt, rb, rn = _any_frame(r)
        li = lobe[0] * rt + lobe[1] * rb + lobe[2] * rn
        pdf = (e + 1.0) / (2.0 * np.pi) * cos_a ** e
        if li[2] > 0.0 and lo[2] > 0.0:
            value = material.albedo * (e + 2.0) / (2.0 * np.pi) * cos_a ** e
        else:
            value = np.zeros(3)
        return {"wi": frame.to_world(li), "pdf": max(pdf, 1e-12), "value": value,
                "is_specular": False}
    if material.kind == "mirror":
        li = reflect(lo)
        f = schlick(material.albedo, lo[2])
        return {"wi": frame.to_world(li), "pdf": 1.0, "value": f, "is_specular": True}
    # transmission
    eta = 1.0 / material.ior if entering else material.ior
    cos_i = lo[2]
    sin2_t = eta * eta * max(1.0 - cos_i * cos_i, 0.0)
    f0 = ((material.ior - 1.0) / (material.ior + 1.0)) ** 2
    if sin2_t >= 1.0:  # total internal reflection
        li = reflect(lo)
    else:
        fr = float(schlick(f0, cos_i))
        if u1 < fr:
            li = reflect(lo)
        else:
            cos_t = np.sqrt(1.0 - sin2_t)
            li = np.array([-eta * lo[0], -eta * lo[1], -cos_t])
    return {"wi": frame.to_world(li), "pdf": 1.0, "value": material.albedo.copy(),
            "is_specular": True}


def _any_frame(axis):
    a = np.array([0.0, 1.0, 0.0]) if abs(axis[0]) > 0.9 else np.array([1.0, 0.0, 0.0])
    t = np.cross(a, axis)
    t /= np.linalg.norm(t)
    return t, np.cross(axis, t), axis


def power_heuristic(pdf_a, pdf_b):
    """beta=2 power heuristic weight for technique a (pdfs must be > 0;
    invalid rows come out as nan and must be masked by the caller)."""
    with np.errstate(invalid="ignore", divide="ignore"):
        a2 = pdf_a * pdf_a
        return a2 / (a2 + pdf_b * pdf_b)


# ---------------------------------------------------------------------------
# batch kernels (local-frame directions, material id arrays)

def eval_batch(tables, mat, lo, li):
    """f (N,3) and sampling pdf (N,) for non-specular rows; 0 elsewhere."""
    kind = tables["kind"][mat]
    albedo = tables["albedo"][mat]
    e = tables["exponent"][mat]
    above = (lo[:, 2] > 0.0) & (li[:, 2] > 0.0)
    f = np.zeros_like(albedo)
    pdf = np.zeros(len(mat))
    dif = (kind == KIND_DIFFUSE)
    f[dif & above] = albedo[dif & above] / np.pi
    pdf[dif] = np.maximum(li[dif, 2], 0.0) / np.pi
    glo = (kind == KIND_GLOSSY)
    if glo.any():
        cos_a = np.maximum(
            -lo[glo, 0] * li[glo, 0] - lo[glo, 1] * li[glo, 1] + lo[glo, 2] * li[glo, 2], 0.0)
        eg = e[glo]
        lobe = cos_a ** eg
        f[glo] = albedo[glo] * ((eg + 2.0) / (2.0 * np.pi) * lobe)[:, None]
        f[glo & ~above] = 0.0
        pdf[glo] = (eg + 1.0) / (2.0 * np.pi) * lobe
    return f, pdf


def sample_batch(tables, mat, lo, u1, u2, entering):
    """Vectorized sample_bsdf. Returns (li, pdf, value, is_specular)."""
    n = len(mat)
    kind = tables["kind"][mat]
    albedo = tables["albedo"][mat]
    li = np.zeros((n, 3))
    pdf = np.full(n, 1.0)
    value = np.zeros((n, 3))
    is_spec = (kind == KIND_MIRROR) | (kind == KIND_TRANSMISSION)

    dif = kind == KIND_DIFFUSE
    if dif.any():
        r = np.sqrt(u1[dif])
        phi = 2.0 * np.pi * u2[dif]
        z = np.sqrt(np.maximum(1.0 - u1[dif], 0.0))
        li[dif] = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        pdf[dif] = np.maximum(z / np.pi, 1e-12)
        value[dif] = np.where(lo[dif, 2:3] > 0.0, albedo[dif] / np.pi, 0.0)

    glo = kind == KIND_GLOSSY
    if glo.any():
        e = tables["exponent"][mat][glo]
        cos_a = u1[glo] ** (1.0 / (e + 1.0))
        sin_a = np.sqrt(np.maximum(1.0 - cos_a * cos_a, 0.0))
        phi = 2.0 * np.pi * u2[glo]
        lobe = np.stack([sin_a * np.cos(phi), sin_a * np.sin(phi), cos_a], axis=1)
        r = lo[glo].copy()
        r[:, 0] *= -1.0
        r[:, 1] *= -1.0
        t, b, axis = _frames_around(r)
        wig = lobe[:, 0:1] * t + lobe[:, 1:2] * b + lobe[:, 2:3] * axis
        li[glo] = wig
        lobe_d = cos_a ** e
        pdf[glo] = np.maximum((e + 1.0) / (2.0 * np.pi) * lobe_d, 1e-12)
        ok = (wig[:, 2] > 0.0) & (lo[glo, 2] > 0.0)
        value[glo] = np.where(ok[:, None],
                              albedo[glo] * ((e + 2.0) / (2.0 * np.pi) * lobe_d)[:, None],
                              0.0)

    mir = kind == KIND_MIRROR
    if mir.any():
        lm = lo[mir]
        li[mir] = np.stack([-lm[:, 0], -lm[:, 1], lm[:, 2]], axis=1)
        value[mir] = schlick(albedo[mir], lm[:, 2:3])

    tra = kind == KIND_TRANSMISSION
    if tra.any():
        ior = tables["ior"][mat][tra]
        eta = np.where(entering[tra], 1.0 / ior, ior)
        lt = lo[tra]
        cos_i = lt[:, 2]
        sin2_t = eta * eta * np.maximum(1.0 - cos_i * cos_i, 0.0)
        f0 = ((ior - 1.0) / (ior + 1.0)) ** 2
        fr = schlick(f0, cos_i)
        tir = sin2_t >= 1.0
        refl = tir | (u1[tra] < fr)
        cos_t = np.sqrt(np.maximum(1.0 - sin2_t, 0.0))
        out = np.where(refl[:, None],
                       np.stack([-lt[:, 0], -lt[:, 1], cos_i], axis=1),
                       np.stack([-eta * lt[:, 0], -eta * lt[:, 1], -cos_t], axis=1))
        li[tra] = out
        value[tra] = albedo[tra]
    return li, pdf, value, is_spec


def _frames_around(axis):
    pick = np.abs(axis[:, 0]) > 0.9
    a = np.where(pick[:, None], [[0.0, 1.0, 0.0]], [[1.0, 0.0, 0.0]])
    t = np.cross(a, axis)
    t /= np.maximum(np.linalg.norm(t, axis=1, keepdims=True), 1e-12)
    return t, np.cross(axis, t), axis
