#!/usr/bin/env python3
"""Regenerate the corpus scene documents in scenes/.

Three scenes ship with the repo:
  cornell.json    classic two-box interior with a ceiling area light
  glossybox.json  glossy sphere lit only indirectly (baffled corner uplight;
                  the direct pass is exactly black)
  room.json       furnished interior with a wall-washer, a ceiling lamp,
                  a point light, a wall mirror and a glossy floor
"""

import json
import math
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from drc.scene import parse_scene, serialize_scene  # noqa: E402

OUT = os.path.join(os.path.dirname(__file__), "..", "scenes")


def quad(corner, eu, ev, material):
    return {"type": "quad", "corner": list(corner), "edge_u": list(eu),
            "edge_v": list(ev), "material": material}


def box_quads(cx, cz, hx, hz, height, angle_deg, material, y0=0.0):
    """Five quads (4 sides + top) of a rotated axis-aligned box footprint."""
    a = math.radians(angle_deg)
    ca, sa = math.cos(a), math.sin(a)

    def rot(dx, dz):
        return (cx + dx * ca - dz * sa, cz + dx * sa + dz * ca)

    p = [rot(-hx, -hz), rot(hx, -hz), rot(hx, hz), rot(-hx, hz)]
    quads = []
    top = height + y0
    for i in range(4):
        x0, z0 = p[i]
        x1, z1 = p[(i + 1) % 4]
        quads.append(quad((x0, y0, z0), (x1 - x0, 0, z1 - z0), (0, height, 0), material))
    quads.append(quad((p[0][0], top, p[0][1]),
                      (p[1][0] - p[0][0], 0, p[1][1] - p[0][1]),
                      (p[3][0] - p[0][0], 0, p[3][1] - p[0][1]), material))
    return quads


def cornell():
    W, H, D = 5.56, 5.49, 5.59
    shapes = [
        quad((0, 0, 0), (W, 0, 0), (0, 0, D), "white"),          # floor
        quad((0, H, 0), (0, 0, D), (W, 0, 0), "white"),          # ceiling (faces down)
        quad((0, 0, D), (W, 0, 0), (0, H, 0), "white"),          # back wall
        quad((0, 0, 0), (0, 0, D), (0, H, 0), "green"),          # x=0 wall
        quad((W, 0, 0), (0, H, 0), (0, 0, D), "red"),            # x=W wall
        quad((2.13, H - 0.01, 2.27), (1.30, 0, 0), (0, 0, 1.05), "lamp"),  # faces down
    ]
    shapes += box_quads(3.66, 3.51, 0.85, 0.85, 3.30, 17.0, "white")   # tall box
    shapes += box_quads(1.85, 1.70, 0.80, 0.80, 1.65, -18.0, "white")  # short box
    return {
        "camera": {"position": [2.78, 2.73, -8.0], "look_at": [2.78, 2.73, 2.8],
                   "up": [0, 1, 0], "fov": 39.3, "resolution": [128, 128]},
        "global_up": [0, 1, 0],
        "materials": {
            "white": {"kind": "diffuse", "albedo": [0.73, 0.73, 0.73]},
            "red": {"kind": "diffuse", "albedo": [0.62, 0.062, 0.061]},
            "green": {"kind": "diffuse", "albedo": [0.135, 0.45, 0.095]},
            "lamp": {"kind": "diffuse", "albedo": [0.6, 0.6, 0.6],
                     "emission": [15.0, 11.0, 5.0]},
        },
        "shapes": shapes,
        "point_lights": [],
    }


def glossybox():
    # Light sits face-down inside a baffled corner pocket; every surface the
    # camera can see receives no direct light at all.
    shapes = [
        quad((0, 0, 0), (4, 0, 0), (0, 0, 4), "floor"),
        quad((0, 4, 0), (0, 0, 4), (4, 0, 0), "white"),
        quad((0, 0, 4), (4, 0, 0), (0, 4, 0), "backwall"),
        quad((0, 0, 0), (0, 0, 4), (0, 4, 0), "white"),
        quad((4, 0, 0), (0, 4, 0), (0, 0, 4), "warm"),
        # pocket baffles in the back-left corner, open at the top
        quad((0, 0, 2.8), (1.4, 0, 0), (0, 3.8, 0), "white"),
        quad((1.4, 0, 2.8), (0, 0, 1.2), (0, 3.8, 0), "white"),
        # down-facing emitter inside the pocket
        quad((0.1, 3.4, 2.9), (1.2, 0, 0), (0, 0, 1.0), "lamp"),
        {"type": "sphere", "center": [2.5, 1.0, 1.6], "radius": 1.0,
         "material": "gloss"},
    ]
    return {
        "camera": {"position": [2.0, 2.0, -4.2], "look_at": [2.0, 1.3, 2.0],
                   "up": [0, 1, 0], "fov": 36.0, "resolution": [128, 128]},
        "global_up": [0, 1, 0],
        "materials": {
            "white": {"kind": "diffuse", "albedo": [0.85, 0.85, 0.85]},
            "floor": {"kind": "diffuse", "albedo": [0.55, 0.55, 0.55]},
            "backwall": {"kind": "diffuse", "albedo": [0.50, 0.56, 0.75]},
            "warm": {"kind": "diffuse", "albedo": [0.72, 0.64, 0.50]},
            "gloss": {"kind": "glossy", "albedo": [0.85, 0.85, 0.85], "roughness": 0.12},
            "lamp": {"kind": "diffuse", "albedo": [0.7, 0.7, 0.7],
                     "emission": [110.0, 104.0, 94.0]},
        },
        "shapes": shapes,
        "point_lights": [],
    }


def room():
    W, H, D = 6.0, 4.0, 6.0
    shapes = [
        quad((0, 0, 0), (W, 0, 0), (0, 0, D), "wood"),
        quad((0, H, 0), (0, 0, D), (W, 0, 0), "plaster"),
        quad((0, 0, D), (W, 0, 0), (0, H, 0), "plaster"),
        quad((0, 0, 0), (0, 0, D), (0, H, 0), "plaster"),
        quad((W, 0, 0), (0, H, 0), (0, 0, D), "plaster"),
        # wall washer: strong panel facing the back wall (most light is indirect)
        quad((1.8, 2.6, 5.6), (2.4, 0, 0), (0, 0.8, 0), "washer"),
        # small ceiling lamp facing down
        quad((2.5, H - 0.05, 2.3), (1.0, 0, 0), (0, 0, 1.0), "lamp"),
        # mirror panel on the x=W wall
        quad((W - 0.01, 0.8, 1.6), (0, 1.8, 0), (0, 0, 1.4), "mirror"),
        {"type": "sphere", "center": [4.35, 1.25, 2.45], "radius": 0.35,
         "material": "ball"},
    ]
    shapes += box_quads(4.3, 2.3, 0.65, 0.45, 0.9, 8.0, "wood_dark")   # table
    shapes += box_quads(0.95, 4.6, 0.5, 0.5, 2.6, 0.0, "wood_dark")    # cabinet
    return {
        "camera": {"position": [3.0, 2.1, -5.5], "look_at": [3.0, 1.6, 3.0],
                   "up": [0, 1, 0], "fov": 44.0, "resolution": [128, 128]},
        "global_up": [0, 1, 0],
        "materials": {
            "plaster": {"kind": "diffuse", "albedo": [0.68, 0.66, 0.62]},
            "wood": {"kind": "glossy", "albedo": [0.50, 0.38, 0.26], "roughness": 0.5},
            "wood_dark": {"kind": "diffuse", "albedo": [0.33, 0.24, 0.16]},
            "mirror": {"kind": "mirror", "albedo": [0.9, 0.9, 0.9]},
            "ball": {"kind": "glossy", "albedo": [0.75, 0.72, 0.65], "roughness": 0.3},
            "washer": {"kind": "diffuse", "albedo": [0.6, 0.6, 0.6],
                       "emission": [26.0, 24.0, 20.0]},
            "lamp": {"kind": "diffuse", "albedo": [0.6, 0.6, 0.6],
                     "emission": [10.0, 9.5, 8.5]},
        },
        "shapes": shapes,
        "point_lights": [
            {"position": [1.2, 1.5, 1.0], "intensity": [1.5, 1.0, 0.6]},
        ],
    }


def cornell_teal():
    """Recolored, rearranged two-box interior (adds scene variety for
    dataset generation while staying cheap to trace)."""
    doc = cornell()
    doc["materials"]["red"]["albedo"] = [0.14, 0.42, 0.45]
    doc["materials"]["green"]["albedo"] = [0.52, 0.36, 0.12]
    doc["materials"]["lamp"]["emission"] = [11.0, 12.5, 13.0]
    shapes = doc["shapes"][:6]
    shapes += box_quads(1.75, 3.61, 0.85, 0.85, 2.6, -24.0, "white")
    shapes += box_quads(3.8, 1.8, 0.7, 0.7, 1.2, 31.0, "white")
    doc["shapes"] = shapes
    doc["camera"]["position"] = [2.9, 2.5, -7.6]
    doc["camera"]["look_at"] = [2.7, 2.6, 2.8]
    return doc


def main():
    os.makedirs(OUT, exist_ok=True)
    for name, doc in [("cornell", cornell()), ("glossybox", glossybox()),
                      ("room", room()), ("cornell_teal", cornell_teal())]:
        text = json.dumps(doc, indent=2)
        scene = parse_scene(text, name=name)  # validate before writing
        path = os.path.join(OUT, f"{name}.json")
        with open(path, "w", encoding="utf-8") as f:
            f.write(serialize_scene(scene) + "\n")
        print(f"wrote {path}: {len(scene.shapes)} shapes, "
              f"{len(scene.point_lights)} point lights")


if __name__ == "__main__":
    main()
