import json
import os

import numpy as np
import pytest

from drc.scene import parse_scene

SCENES_DIR = os.path.join(os.path.dirname(__file__), "..", "scenes")


def scene_path(name):
    return os.path.join(SCENES_DIR, f"{name}.json")


def make_scene(shapes=None, materials=None, point_lights=None, camera=None,
               environment=None, global_up=(0, 1, 0), name="test"):
    """Assemble a scene document from parts and parse it."""
    doc = {
        "camera": camera or {
            "position": [0, 0, -5], "look_at": [0, 0, 0], "up": [0, 1, 0],
            "fov": 40.0, "resolution": [64, 64],
        },
        "global_up": list(global_up),
        "materials": materials or {
            "gray": {"kind": "diffuse", "albedo": [0.5, 0.5, 0.5]},
        },
        "shapes": shapes if shapes is not None else [
            {"type": "sphere", "center": [0, 0, 0], "radius": 1.0, "material": "gray"},
        ],
        "point_lights": point_lights or [],
    }
    if environment is not None:
        doc["environment"] = list(environment)
    return parse_scene(json.dumps(doc), name=name)


@pytest.fixture
def furnace_scene():
    """Convex diffuse sphere (albedo 0.5) in a unit constant environment."""
    return make_scene(environment=[1.0, 1.0, 1.0], name="furnace")


@pytest.fixture
def cornell_scene():
    with open(scene_path("cornell"), "r", encoding="utf-8") as f:
        return parse_scene(f.read(), name="cornell")


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
