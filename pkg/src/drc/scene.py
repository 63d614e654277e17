"""Scene description: camera, materials, shapes, lights, parsing.

The scene document is UTF-8 JSON with the top-level keys `camera`,
`materials`, `shapes`, `point_lights`, `global_up` (plus optional
`environment`). Angles are degrees, positions meters, colors 3-arrays.
A Scene is immutable after parsing and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SceneParseError, SceneValidationError

MATERIAL_KINDS = ("diffuse", "glossy", "mirror", "transmission")
SPECULAR_KINDS = ("mirror", "transmission")


def vec3(x, y=None, z=None):
    if y is None:
        a = np.asarray(x, dtype=np.float64)
        if a.shape != (3,):
            raise ValueError(f"expected 3 components, got shape {a.shape}")
        return a
    return np.array([x, y, z], dtype=np.float64)


def normalize(v):
    n = float(np.linalg.norm(v))
    if n < 1e-12:
        raise ValueError("cannot normalize a zero-length vector")
    return v / n


@dataclass(frozen=True)
class Material:
    name: str
    kind: str
    albedo: np.ndarray
    roughness: float | None = None
    ior: float | None = None
    emission: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def is_specular(self):
        return self.kind in SPECULAR_KINDS

    @property
    def is_emitter(self):
        return bool(np.any(self.emission > 0))

    @property
    def phong_exponent(self):
        # roughness in (0,1]; exponent 2/r^2 - 2 spans Lambertian-wide to sharp
        return 2.0 / (self.roughness * self.roughness) - 2.0


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fov: float
    resolution: tuple[int, int]

    def basis(self):
        forward = normalize(self.look_at - self.position)
        right = normalize(np.cross(forward, self.up))
        cam_up = np.cross(right, forward)
        return forward, right, cam_up

    def ray_directions(self, px, py):
        """Directions through image-plane points (px, py) in pixel coordinates.

        px/py broadcast; x grows right, y grows down; (0,0) is the top-left
        pixel corner.
        """
        w, h = self.resolution
        forward, right, cam_up = self.basis()
        tan_half = math.tan(math.radians(self.fov) * 0.5)
        aspect = w / h
        ndc_x = (np.asarray(px, dtype=np.float64) / w * 2.0 - 1.0) * tan_half * aspect
        ndc_y = (1.0 - np.asarray(py, dtype=np.float64) / h * 2.0) * tan_half
        d = (
            forward
            + ndc_x[..., None] * right
            + ndc_y[..., None] * cam_up
        )
        return d / np.linalg.norm(d, axis=-1, keepdims=True)


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray
    radius: float
    material: str


@dataclass(frozen=True)
class Quad:
    corner: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    material: str


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray  # (V,3)
    triangles: np.ndarray  # (T,3) int
    material: str


@dataclass(frozen=True)
class PointLight:
    position: np.ndarray
    intensity: np.ndarray  # W/sr


@dataclass(frozen=True)
class Scene:
    camera: Camera
    materials: tuple[Material, ...]
    shapes: tuple
    point_lights: tuple[PointLight, ...]
    global_up: np.ndarray
    environment: np.ndarray
    name: str = "scene"

    def material_index(self, name):
        for i, m in enumerate(self.materials):
            if m.name == name:
                return i
        raise SceneValidationError(f"material {name!r} is not declared")

    @property
    def geometry(self):
        # built lazily, cached on first use; object.__setattr__ because frozen
        g = self.__dict__.get("_geometry")
        if g is None:
            from .geometry import Geometry

            g = Geometry(self)
            object.__setattr__(self, "_geometry", g)
        return g

    def to_dict(self):
        shapes = []
        for s in self.shapes:
            if isinstance(s, Sphere):
                shapes.append(
                    {"type": "sphere", "center": list(s.center), "radius": s.radius,
                     "material": s.material}
                )
            elif isinstance(s, Quad):
                shapes.append(
                    {"type": "quad", "corner": list(s.corner), "edge_u": list(s.edge_u),
                     "edge_v": list(s.edge_v), "material": s.material}
                )
            else:
                shapes.append(
                    {"type": "mesh", "vertices": [list(v) for v in s.vertices],
                     "triangles": [list(int(i) for i in t) for t in s.triangles],
                     "material": s.material}
                )
        materials = {}
        for m in self.materials:
            d = {"kind": m.kind, "albedo": list(m.albedo)}
            if m.roughness is not None:
                d["roughness"] = m.roughness
            if m.ior is not None:
                d["ior"] = m.ior
            if m.is_emitter:
                d["emission"] = list(m.emission)
            materials[m.name] = d
        doc = {
            "camera": {
                "position": list(self.camera.position),
                "look_at": list(self.camera.look_at),
                "up": list(self.camera.up),
                "fov": self.camera.fov,
                "resolution": list(self.camera.resolution),
            },
            "global_up": list(self.global_up),
            "materials": materials,
            "shapes": shapes,
            "point_lights": [
                {"position": list(l.position), "intensity": list(l.intensity)}
                for l in self.point_lights
            ],
        }
        if np.any(self.environment > 0):
            doc["environment"] = list(self.environment)
        return doc


def _require_keys(obj, required, optional, where):
    if not isinstance(obj, dict):
        raise SceneValidationError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SceneValidationError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise SceneValidationError(f"{where}: missing keys {sorted(missing)}")


def _color(value, where, lo=0.0, hi=None):
    try:
        c = vec3(value)
    except (ValueError, TypeError):
        raise SceneValidationError(f"{where}: expected a 3-array of reals")
    if not np.all(np.isfinite(c)):
        raise SceneValidationError(f"{where}: non-finite components")
    if np.any(c < lo) or (hi is not None and np.any(c > hi)):
        rng = f"[{lo}, {hi}]" if hi is not None else f">= {lo}"
        raise SceneValidationError(f"{where}: components must be {rng}")
    return c


def _parse_material(name, spec):
    _require_keys(spec, ["kind", "albedo"], ["roughness", "ior", "emission"],
                  f"materials[{name!r}]")
    kind = spec["kind"]
    if kind not in MATERIAL_KINDS:
        raise SceneValidationError(f"materials[{name!r}]: unknown kind {kind!r}")
    albedo = _color(spec["albedo"], f"materials[{name!r}].albedo", 0.0, 1.0)
    emission = _color(spec.get("emission", [0, 0, 0]), f"materials[{name!r}].emission", 0.0)
    if not np.any(emission > 0) and np.any(albedo >= 1.0):
        raise SceneValidationError(
            f"materials[{name!r}]: non-emitter albedo must be < 1 componentwise"
        )
    roughness = spec.get("roughness")
    ior = spec.get("ior")
    if kind == "glossy":
        if roughness is None or not (0.0 < roughness <= 1.0):
            raise SceneValidationError(f"materials[{name!r}]: glossy needs roughness in (0,1]")
    elif roughness is not None:
        raise SceneValidationError(f"materials[{name!r}]: roughness is glossy-only")
    if kind == "transmission":
        if ior is None or not ior > 0:
            raise SceneValidationError(f"materials[{name!r}]: transmission needs ior > 0")
    elif ior is not None:
        raise SceneValidationError(f"materials[{name!r}]: ior is transmission-only")
    return Material(name=name, kind=kind, albedo=albedo, roughness=roughness,
                    ior=ior, emission=emission)


def _parse_shape(i, spec, material_names):
    where = f"shapes[{i}]"
    if not isinstance(spec, dict) or "type" not in spec:
        raise SceneValidationError(f"{where}: expected an object with a 'type' key")
    kind = spec["type"]
    if kind == "sphere":
        _require_keys(spec, ["type", "center", "radius", "material"], [], where)
        radius = float(spec["radius"])
        if radius <= 0:
            raise SceneValidationError(f"{where}: radius must be > 0")
        shape = Sphere(vec3(spec["center"]), radius, spec["material"])
    elif kind == "quad":
        _require_keys(spec, ["type", "corner", "edge_u", "edge_v", "material"], [], where)
        eu, ev = vec3(spec["edge_u"]), vec3(spec["edge_v"])
        if np.linalg.norm(np.cross(eu, ev)) < 1e-12:
            raise SceneValidationError(f"{where}: degenerate quad (parallel edges)")
        shape = Quad(vec3(spec["corner"]), eu, ev, spec["material"])
    elif kind == "mesh":
        _require_keys(spec, ["type", "vertices", "triangles", "material"], [], where)
        verts = np.asarray(spec["vertices"], dtype=np.float64)
        tris = np.asarray(spec["triangles"], dtype=np.int64)
        if verts.ndim != 2 or verts.shape[1] != 3 or tris.ndim != 2 or tris.shape[1] != 3:
            raise SceneValidationError(f"{where}: vertices must be Nx3, triangles Mx3")
        if tris.size and (tris.min() < 0 or tris.max() >= len(verts)):
            raise SceneValidationError(f"{where}: triangle index out of range")
        shape = Mesh(verts, tris, spec["material"])
    else:
        raise SceneValidationError(f"{where}: unknown shape type {kind!r}")
    if shape.material not in material_names:
        raise SceneValidationError(f"{where}: material {shape.material!r} is not declared")
    return shape


def parse_scene(text, name="scene"):
    """Parse and fully validate a scene document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SceneParseError(f"syntax error at line {e.lineno} column {e.colno}: {e.msg}")
    _require_keys(doc, ["camera", "materials", "shapes", "point_lights", "global_up"],
                  ["environment"], "document")

    cam = doc["camera"]
    _require_keys(cam, ["position", "look_at", "up", "fov", "resolution"], [], "camera")
    fov = float(cam["fov"])
    if not (0.0 < fov < 180.0):
        raise SceneValidationError(f"camera.fov must be in (0, 180), got {fov}")
    res = cam["resolution"]
    if (not isinstance(res, (list, tuple)) or len(res) != 2
            or any((not isinstance(v, int)) or v < 1 for v in res)):
        raise SceneValidationError("camera.resolution must be two positive integers")
    position, look_at = vec3(cam["position"]), vec3(cam["look_at"])
    if np.linalg.norm(look_at - position) < 1e-12:
        raise SceneValidationError("camera.look_at coincides with camera.position")
    camera = Camera(position, look_at, normalize(vec3(cam["up"])), fov,
                    (int(res[0]), int(res[1])))

    if not isinstance(doc["materials"], dict) or not doc["materials"]:
        raise SceneValidationError("materials must be a non-empty object")
    materials = tuple(_parse_material(n, s) for n, s in doc["materials"].items())
    names = {m.name for m in materials}

    if not isinstance(doc["shapes"], list):
        raise SceneValidationError("shapes must be an array")
    shapes = tuple(_parse_shape(i, s, names) for i, s in enumerate(doc["shapes"]))

    if not isinstance(doc["point_lights"], list):
        raise SceneValidationError("point_lights must be an array")
    lights = []
    for i, l in enumerate(doc["point_lights"]):
        _require_keys(l, ["position", "intensity"], [], f"point_lights[{i}]")
        lights.append(PointLight(vec3(l["position"]),
                                 _color(l["intensity"], f"point_lights[{i}].intensity", 0.0)))

    global_up = normalize(vec3(doc["global_up"]))
    environment = _color(doc.get("environment", [0, 0, 0]), "environment", 0.0)
    return Scene(camera=camera, materials=materials, shapes=shapes,
                 point_lights=tuple(lights), global_up=global_up,
                 environment=environment, name=name)


def serialize_scene(scene):
    """Scene -> canonical document text; parse(serialize(s)) round-trips."""
    return json.dumps(scene.to_dict(), indent=2)


def load_scene(path):
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    import os

    return parse_scene(text, name=os.path.splitext(os.path.basename(path))[0])
