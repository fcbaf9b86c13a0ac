"""Deterministic software rasterizer and camera projection.

Coverage decisions use 24.8 fixed-point edge functions with a top-left fill
rule, so they are exact integer tests and the output is byte-identical
across runs and platforms. Shading is flat-gray Lambertian plus an ambient
floor; depth is z-buffered (inverse depth for the pinhole camera, so the
depth test stays correct under perspective).

Camera convention: +x right, +y up, +z away from the viewer. Projection
flips y so image rows grow downward. A pinhole camera requires every point
strictly in front of it (z > 0); the weak-perspective camera ignores depth
for projection but still resolves occlusion by z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .images import Image
from .model import Mesh

WEAK_PERSPECTIVE = "weak_perspective"
PINHOLE = "pinhole"

_SUB = 256  # 24.8 fixed point
_HALF = 128  # pixel-center offset in subpixel units


class ProjectionError(ValueError):
    """A point is at or behind the pinhole camera plane."""


@dataclass(frozen=True)
class CameraParams:
    mode: str = WEAK_PERSPECTIVE
    focal: float = 100.0          # pixels per model unit (weak) or focal length in pixels (pinhole)
    principal: tuple[float, float] = (128.0, 128.0)
    width: int = 256
    height: int = 256

    def __post_init__(self):
        if self.mode not in (WEAK_PERSPECTIVE, PINHOLE):
            raise ValueError(f"unknown camera mode {self.mode!r}")
        if not self.focal > 0:
            raise ValueError(f"focal must be positive, got {self.focal}")
        if self.width < 8 or self.height < 8:
            raise ValueError("image must be at least 8x8")


@dataclass(frozen=True)
class LightingParams:
    direction: tuple[float, float, float] = (0.0, 0.0, -1.0)  # unit vector toward the emitter
    ambient: float = 0.3
    diffuse: float = 0.7

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-6:
            raise ValueError("light direction must be unit length")
        if not (0.0 <= self.ambient <= 1.0 and 0.0 <= self.diffuse <= 1.0):
            raise ValueError("ambient and diffuse must lie in [0, 1]")
        if self.ambient + self.diffuse > 1.0 + 1e-12:
            raise ValueError("ambient + diffuse must not exceed 1")


def default_camera(width: int = 256, height: int = 256, focal: float = 100.0,
                   mode: str = WEAK_PERSPECTIVE) -> CameraParams:
    return CameraParams(mode=mode, focal=focal, principal=(width / 2.0, height / 2.0),
                        width=width, height=height)


def project(points, camera: CameraParams) -> np.ndarray:
    """(m, 3) model-space points to (m, 2) pixel coordinates."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cx, cy = camera.principal
    f = camera.focal
    if camera.mode == PINHOLE:
        z = pts[:, 2]
        if pts.size and np.min(z) <= 1e-12:
            raise ProjectionError("point at or behind the pinhole camera plane")
        sx = f * pts[:, 0] / z
        sy = f * pts[:, 1] / z
    else:
        sx = f * pts[:, 0]
        sy = f * pts[:, 1]
    return np.stack([sx + cx, cy - sy], axis=1)


def _edge(ax, ay, bx, by, px, py):
    """Signed area cross product of (b - a) with (p - a); integer exact."""
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax)


def _top_left(ax, ay, bx, by) -> bool:
    dx = bx - ax
    dy = by - ay
    return (dy == 0 and dx > 0) or dy < 0


def render_mesh(mesh: Mesh, camera: CameraParams, light: LightingParams | None = None) -> Image:
    """Z-buffered rasterization into a gray 8-bit frame; background is 0."""
    if light is None:
        light = LightingParams()
    h, w = camera.height, camera.width
    frame = np.zeros((h, w), dtype=np.uint8)
    tris = np.asarray(mesh.triangles, dtype=np.int64).reshape(-1, 3)
    if mesh.positions.shape[0] == 0 or tris.shape[0] == 0:
        return Image(frame)

    pix = project(mesh.positions, camera)
    if camera.mode == PINHOLE:
        depth = -1.0 / mesh.positions[:, 2]  # monotone in z, linear in screen space
    else:
        depth = mesh.positions[:, 2].astype(np.float64)
    # clamp keeps every edge-function product inside int64 for absurd coordinates
    bound = np.int64(1) << 30
    xq = np.clip(np.rint(pix[:, 0] * _SUB), -bound, bound).astype(np.int64)
    yq = np.clip(np.rint(pix[:, 1] * _SUB), -bound, bound).astype(np.int64)

    vid = tris.copy()
    txq = xq[vid]
    tyq = yq[vid]
    area = (txq[:, 1] - txq[:, 0]) * (tyq[:, 2] - tyq[:, 0]) \
        - (tyq[:, 1] - tyq[:, 0]) * (txq[:, 2] - txq[:, 0])
    flip = area < 0
    vid[flip] = vid[flip][:, [0, 2, 1]]
    txq[flip] = txq[flip][:, [0, 2, 1]]
    tyq[flip] = tyq[flip][:, [0, 2, 1]]
    area = np.abs(area)

    # inclusive pixel ranges whose centers (256*p + 128) fall inside the bbox
    x_lo = np.maximum((txq.min(axis=1) - _HALF + _SUB - 1) // _SUB, 0)
    x_hi = np.minimum((txq.max(axis=1) - _HALF) // _SUB, w - 1)
    y_lo = np.maximum((tyq.min(axis=1) - _HALF + _SUB - 1) // _SUB, 0)
    y_hi = np.minimum((tyq.max(axis=1) - _HALF) // _SUB, h - 1)
    live = (area > 0) & (x_lo <= x_hi) & (y_lo <= y_hi)

    zbuf = np.full((h, w), np.inf)
    tdep = depth[vid]
    tnrm = mesh.vertex_normals[vid]
    ldir = np.asarray(light.direction, dtype=np.float64)
    ambient, diffuse = light.ambient, light.diffuse

    for t in np.nonzero(live)[0]:
        ax, bx, cx = (int(v) for v in txq[t])
        ay, by, cy = (int(v) for v in tyq[t])
        px = (np.arange(x_lo[t], x_hi[t] + 1, dtype=np.int64) * _SUB + _HALF)
        py = (np.arange(y_lo[t], y_hi[t] + 1, dtype=np.int64) * _SUB + _HALF)
        pxg = px[None, :]
        pyg = py[:, None]
        # edge i is opposite vertex i; E >= 0 inside after orientation fix
        e0 = _edge(bx, by, cx, cy, pxg, pyg)
        e1 = _edge(cx, cy, ax, ay, pxg, pyg)
        e2 = _edge(ax, ay, bx, by, pxg, pyg)
        inside = (
            ((e0 > 0) | ((e0 == 0) & _top_left(bx, by, cx, cy)))
            & ((e1 > 0) | ((e1 == 0) & _top_left(cx, cy, ax, ay)))
            & ((e2 > 0) | ((e2 == 0) & _top_left(ax, ay, bx, by)))
        )
        if not inside.any():
            continue
        inv_area = 1.0 / float(area[t])
        w0 = e0 * inv_area
        w1 = e1 * inv_area
        w2 = e2 * inv_area
        zp = w0 * tdep[t, 0] + w1 * tdep[t, 1] + w2 * tdep[t, 2]
        ys = slice(int(y_lo[t]), int(y_hi[t]) + 1)
        xs = slice(int(x_lo[t]), int(x_hi[t]) + 1)
        sub_z = zbuf[ys, xs]
        update = inside & (zp < sub_z)
        if not update.any():
            continue
        n = (w0[:, :, None] * tnrm[t, 0] + w1[:, :, None] * tnrm[t, 1]
             + w2[:, :, None] * tnrm[t, 2])
        lengths = np.linalg.norm(n, axis=2)
        lam = (n @ ldir) / np.maximum(lengths, 1e-300)
        shade = ambient + diffuse * np.maximum(lam, 0.0)
        value = np.floor(255.0 * np.clip(shade, 0.0, 1.0) + 0.5).astype(np.uint8)
        sub_z[update] = zp[update]
        frame[ys, xs][update] = value[update]
    return Image(frame)


def camera_to_json(camera: CameraParams) -> dict:
    return {
        "mode": camera.mode,
        "focal": camera.focal,
        "principal": list(camera.principal),
        "width": camera.width,
        "height": camera.height,
    }


def camera_from_json(doc: dict) -> CameraParams:
    return CameraParams(
        mode=doc.get("mode", WEAK_PERSPECTIVE),
        focal=float(doc["focal"]),
        principal=(float(doc["principal"][0]), float(doc["principal"][1])),
        width=int(doc["width"]),
        height=int(doc["height"]),
    )
