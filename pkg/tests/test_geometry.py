import json

import numpy as np
import pytest

from drc.geometry import Ray, intersect, intersect_batch, intersect_linear
from drc.scene import parse_scene

from conftest import make_scene


def test_unit_sphere_axis_hit():
    scene = make_scene()
    hit = intersect(scene, Ray(np.array([0.0, 0.0, -5.0]), np.array([0.0, 0.0, 1.0])))
    assert hit is not None
    assert hit.distance == pytest.approx(4.0, abs=1e-12)
    assert np.allclose(hit.normal, [0, 0, -1], atol=1e-12)


def test_t_max_excludes_hit():
    scene = make_scene()
    ray = Ray(np.array([0.0, 0.0, -5.0]), np.array([0.0, 0.0, 1.0]), t_max=3.0)
    assert intersect(scene, ray) is None


def test_quad_and_triangle_hits():
    scene = make_scene(shapes=[
        {"type": "quad", "corner": [-1, -1, 2], "edge_u": [2, 0, 0],
         "edge_v": [0, 2, 0], "material": "gray"},
        {"type": "mesh", "vertices": [[-1, -1, 1], [1, -1, 1], [0, 1, 1]],
         "triangles": [[0, 1, 2]], "material": "gray"},
    ])
    hit = intersect(scene, Ray(np.array([0.0, 0.0, -5.0]), np.array([0.0, 0.0, 1.0])))
    assert hit is not None and hit.distance == pytest.approx(6.0)  # triangle first
    hit2 = intersect(scene, Ray(np.array([0.9, 0.9, -5.0]), np.array([0.0, 0.0, 1.0])))
    assert hit2 is not None and hit2.distance == pytest.approx(7.0)  # quad corner area


def _random_shape_scene(rng, n_spheres, n_quads, n_tris=0):
    shapes = []
    for _ in range(n_spheres):
        shapes.append({"type": "sphere",
                       "center": list(rng.uniform(-5, 5, 3)),
                       "radius": float(rng.uniform(0.1, 1.2)),
                       "material": "gray"})
    for _ in range(n_quads):
        shapes.append({"type": "quad",
                       "corner": list(rng.uniform(-5, 5, 3)),
                       "edge_u": list(rng.uniform(-2, 2, 3)),
                       "edge_v": list(rng.uniform(-2, 2, 3)),
                       "material": "gray"})
    if n_tris:
        verts = rng.uniform(-5, 5, (3 * n_tris, 3))
        tris = np.arange(3 * n_tris).reshape(-1, 3)
        shapes.append({"type": "mesh", "vertices": verts.tolist(),
                       "triangles": tris.tolist(), "material": "gray"})
    return make_scene(shapes=shapes)


@pytest.mark.parametrize("n_spheres,n_quads,n_tris", [(100, 0, 0), (40, 40, 20)])
def test_bvh_equals_linear_scan(rng, n_spheres, n_quads, n_tris):
    scene = _random_shape_scene(rng, n_spheres, n_quads, n_tris)
    n_rays = 10_000
    origins = rng.uniform(-8, 8, (n_rays, 3))
    dirs = rng.normal(size=(n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    batch = intersect_batch(scene.geometry, origins, dirs)
    n_checked_hits = 0
    for i in range(n_rays):
        ray = Ray(origins[i], dirs[i])
        bvh_hit = intersect(scene, ray)
        if batch["hit"][i]:
            assert bvh_hit is not None
            assert bvh_hit.prim == batch["prim"][i]
            assert bvh_hit.distance == batch["t"][i]  # exact, same primitive math
            n_checked_hits += 1
        else:
            assert bvh_hit is None
    assert n_checked_hits > 1000  # the scene actually gets hit


def test_scalar_linear_matches_bvh(rng):
    scene = _random_shape_scene(rng, 30, 10)
    for _ in range(300):
        o = rng.uniform(-8, 8, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        a = intersect(scene, Ray(o, d))
        b = intersect_linear(scene, Ray(o, d))
        if a is None:
            assert b is None
        else:
            assert b is not None and a.prim == b.prim and a.distance == b.distance


def test_batch_respects_bounds(rng):
    scene = make_scene()
    o = np.array([[0.0, 0.0, -5.0]])
    d = np.array([[0.0, 0.0, 1.0]])
    res = intersect_batch(scene.geometry, o, d, t_max=3.0)
    assert not res["hit"][0]
    res = intersect_batch(scene.geometry, o, d, t_max=4.0)
    assert res["hit"][0]  # distance in (t_min, t_max]


def test_emitter_tables(cornell_scene):
    g = cornell_scene.geometry
    assert g.n_lights == 1
    assert len(g.area_light_prim) == 1
    assert g.area_light_area[0] == pytest.approx(1.05 * 1.30)
