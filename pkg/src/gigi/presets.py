"""Scene description JSON and the shipped preset scenes.

Scene schema:
    {
      "primitives": [
        {"type": "plane",  "point": [..], "normal": [..], "material": 0},
        {"type": "sphere", "center": [..], "radius": r,   "material": 1},
        {"type": "box",    "min": [..], "max": [..],      "material": 2}
      ],
      "materials": [{"albedo": [r, g, b], "roughness": x, "metallic": y}, ...],
      "env": null | "path/to/env.pfm",
      "camera": {"rotation": 3x3, "translation": [..], "fov_deg": f,
                 "z_near": zn, "z_far": zf}
    }

The camera block supplies the pose and clip range; image size and focal
length come from the requested resolution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .brdf import Material
from .errors import SceneError
from .gbuffer import CameraIntrinsics, ViewPose
from .ibl import texel_directions
from .oracle import Box, Plane, SceneOracle, Sphere

PRESET_NAMES = ("plane", "corner90", "box_interior", "sphere_on_plane",
                "box_with_offscreen_wall")


@dataclass
class SceneDescription:
    scene: SceneOracle
    camera: dict
    env_path: str | None = None

    def pose(self) -> ViewPose:
        return ViewPose(np.asarray(self.camera.get("rotation", np.eye(3).tolist())),
                        np.asarray(self.camera.get("translation", [0.0, 0.0, 0.0])))

    def intrinsics(self, width: int, height: int) -> CameraIntrinsics:
        return CameraIntrinsics.from_fov(
            width, height,
            fov_deg=self.camera.get("fov_deg", 60.0),
            z_near=self.camera.get("z_near", 0.1),
            z_far=self.camera.get("z_far", 10.0),
        )


def scene_from_json(doc: dict) -> SceneDescription:
    try:
        materials = [Material(albedo=tuple(m["albedo"]),
                              roughness=float(m["roughness"]),
                              metallic=float(m["metallic"]))
                     for m in doc.get("materials", [])]
        prims: list = []
        for p in doc["primitives"]:
            mat = materials[p["material"]] if "material" in p else Material()
            kind = p["type"]
            if kind == "plane":
                prims.append(Plane(p["point"], p["normal"], mat))
            elif kind == "sphere":
                prims.append(Sphere(p["center"], p["radius"], mat))
            elif kind == "box":
                prims.append(Box(p["min"], p["max"], mat))
            else:
                raise SceneError(f"unknown primitive type {kind!r}")
    except (KeyError, IndexError, TypeError) as exc:
        raise SceneError(f"malformed scene description: {exc}") from exc
    return SceneDescription(scene=SceneOracle(primitives=prims),
                            camera=doc.get("camera", {}),
                            env_path=doc.get("env"))


def load_scene_file(path) -> SceneDescription:
    text = Path(path).read_text()
    return scene_from_json(json.loads(text))


def resolve_scene(name_or_path) -> SceneDescription:
    """Accept either a shipped preset name or a path to a scene JSON."""
    name = str(name_or_path)
    if name in PRESET_NAMES:
        return load_preset(name)
    return load_scene_file(name_or_path)


def load_preset(name: str) -> SceneDescription:
    if name not in PRESET_NAMES:
        raise SceneError(f"unknown preset {name!r}; have {PRESET_NAMES}")
    doc = json.loads(resources.files("gigi.presets").joinpath(f"{name}.json").read_text())
    return scene_from_json(doc)


def constant_env(height: int = 64, value=1.0) -> np.ndarray:
    env = np.empty((height, 2 * height, 3))
    env[:] = np.asarray(value, dtype=np.float64)
    return env


def sky_env(height: int = 64, brightness: float = 1.0) -> np.ndarray:
    """Deterministic synthetic sky: ambient dome, a warm sun blob toward the
    camera side, and a cool floor bounce. Suitable as a generic test light."""
    dirs = texel_directions(height, 2 * height)
    sun_dir = np.array([0.35, -0.55, -0.75])
    sun_dir = sun_dir / np.linalg.norm(sun_dir)
    cos_sun = np.clip(dirs @ sun_dir, 0.0, 1.0)
    ambient = 0.35 + 0.25 * np.clip(-dirs[..., 1], 0.0, 1.0)  # brighter "up" (-y)
    sun = 4.0 * cos_sun**40
    env = np.empty((height, 2 * height, 3))
    env[..., 0] = ambient + 1.1 * sun
    env[..., 1] = ambient + 0.9 * sun
    env[..., 2] = ambient * 1.15 + 0.6 * sun
    return brightness * env
