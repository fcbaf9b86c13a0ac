"""Regenerate the golden renders under tests/golden/.

The three scenes are the renderer's cross-platform byte-equality contract;
regenerate them only after an intentional rasterizer change, and expect
the acceptance suite to fail on any unintended drift.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np

from faceprobe.images import write_ppm
from faceprobe.model import ModelParams, instantiate, zero_params
from faceprobe.render import CameraParams, LightingParams, default_camera, render_mesh
from faceprobe.synth import synth_head

GOLDEN_DIR = Path(__file__).resolve().parent.parent / "tests" / "golden"


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return tuple(v / np.linalg.norm(v))


def golden_scenes():
    """Three fixed (name, mesh, camera, light) scenes."""
    scenes = []

    model = synth_head(0)
    scenes.append((
        "scene1_neutral",
        instantiate(model, zero_params(model)),
        default_camera(),
        LightingParams(),
    ))

    model = synth_head(1)
    params = zero_params(model)
    expression = params.expression.copy()
    expression[model.expression_names.index("smile")] = 0.8
    expression[model.expression_names.index("eyebrow")] = -0.5
    rotations = params.rotations.copy()
    rotations[model.joint_index("global")] = (-0.1, 0.4, 0.0)
    scenes.append((
        "scene2_smile_yaw",
        instantiate(model, ModelParams(params.shape, expression, rotations,
                                       params.translation)),
        default_camera(focal=90.0),
        LightingParams(direction=_unit((-0.4, 0.5, -0.8)), ambient=0.25, diffuse=0.7),
    ))

    model = synth_head(2)
    params = zero_params(model)
    expression = params.expression.copy()
    expression[model.expression_names.index("jaw")] = 1.0
    rotations = params.rotations.copy()
    rotations[model.joint_index("global"), 0] = 0.15
    rotations[model.joint_index("jaw"), 0] = 0.25
    scenes.append((
        "scene3_jaw_pinhole",
        instantiate(model, ModelParams(params.shape, expression, rotations,
                                       np.array([0.0, 0.0, 4.0]))),
        CameraParams(mode="pinhole", focal=400.0, principal=(128.0, 128.0),
                     width=256, height=256),
        LightingParams(direction=_unit((0.3, 0.2, -0.9)), ambient=0.3, diffuse=0.65),
    ))
    return scenes


def main() -> int:
    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    for name, mesh, camera, light in golden_scenes():
        image = render_mesh(mesh, camera, light)
        path = GOLDEN_DIR / f"{name}.ppm"
        write_ppm(image, path)
        print(f"wrote {path} ({path.stat().st_size} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
