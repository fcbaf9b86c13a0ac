"""Deterministic synthetic head generator.

Builds a closed lat/long ellipsoid head with carved facial features, four
localized shape directions, five named expression directions, a three-joint
chain (global/neck/jaw) with smooth skin weights, and a 68-point landmark
embedding ray-cast onto the template surface. Every array is a pure
function of the seed, so equal seeds serialize to identical files.

Shape directions are deliberately localized (nose, chin, brow, cheeks)
rather than whole-head scalings: under weak perspective a uniform scale is
indistinguishable from a change of camera magnification, which would make
coefficient recovery from landmarks ill-posed.

Axes: +y up, -z toward the viewer (the face looks at the default camera),
+x to the subject's left. Azimuth is measured about +y from the -z face
direction toward +x; elevation from the horizontal plane.
"""

from __future__ import annotations

import numpy as np

from .model import LANDMARK_COUNT, FaceModel, Joint, ModelParams, validate_model
from .render import CameraParams, default_camera

_N_LAT = 22
_N_LON = 24

EXPRESSION_NAMES = ("jaw", "smile", "pucker", "eyebrow", "frown")


def _sphere_grid():
    """Unit directions and triangles of a closed lat/long sphere (506 verts)."""
    dirs = [np.array([0.0, 1.0, 0.0])]
    for i in range(1, _N_LAT):
        theta = np.pi * i / _N_LAT
        for j in range(_N_LON):
            phi = 2.0 * np.pi * j / _N_LON
            dirs.append(np.array([
                np.sin(theta) * np.sin(phi),
                np.cos(theta),
                -np.sin(theta) * np.cos(phi),
            ]))
    dirs.append(np.array([0.0, -1.0, 0.0]))
    dirs = np.stack(dirs)

    def ring(i, j):
        return 1 + (i - 1) * _N_LON + (j % _N_LON)

    south = len(dirs) - 1
    tris = []
    for j in range(_N_LON):
        tris.append((0, ring(1, j), ring(1, j + 1)))
    for i in range(1, _N_LAT - 1):
        for j in range(_N_LON):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j + 1), ring(i + 1, j)
            tris.append((a, b, c))
            tris.append((a, c, d))
    for j in range(_N_LON):
        tris.append((south, ring(_N_LAT - 1, j + 1), ring(_N_LAT - 1, j)))
    return dirs, np.asarray(tris, dtype=np.int64)


def _orient_outward(vertices, triangles):
    """Flip any triangle whose face normal points toward the origin."""
    p0 = vertices[triangles[:, 0]]
    p1 = vertices[triangles[:, 1]]
    p2 = vertices[triangles[:, 2]]
    centroid = (p0 + p1 + p2) / 3.0
    inward = np.einsum("tc,tc->t", np.cross(p1 - p0, p2 - p0), centroid) < 0
    fixed = triangles.copy()
    fixed[inward] = fixed[inward][:, [0, 2, 1]]
    return fixed


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -60.0, 60.0)))


def _angular_bump(dirs, center, sigma):
    """Gaussian falloff in angular distance from a center direction."""
    c = np.asarray(center, dtype=np.float64)
    c = c / np.linalg.norm(c)
    ang = np.arccos(np.clip(dirs @ c, -1.0, 1.0))
    return np.exp(-0.5 * (ang / sigma) ** 2)


def _band(az, el, az0, el0, s_az, s_el):
    return np.exp(-0.5 * ((az - az0) / s_az) ** 2) * np.exp(-0.5 * ((el - el0) / s_el) ** 2)


def _direction(az_deg, el_deg):
    az = np.deg2rad(az_deg)
    el = np.deg2rad(el_deg)
    return np.array([np.sin(az) * np.cos(el), np.sin(el), -np.cos(az) * np.cos(el)])


def _landmark_directions():
    """68 canonical probe directions in the standard jaw/brow/nose/eye/mouth layout."""
    out = []
    for t in range(17):  # jawline sweep ending at the chin mid-way
        az = -75.0 + 150.0 * t / 16.0
        el = -5.0 - 50.0 * np.cos(np.pi * (t - 8) / 16.0)
        out.append((az, el))
    for t in range(5):  # right brow
        out.append((-44.0 + 26.0 * t / 4.0, 16.0 + 4.0 * np.sin(np.pi * t / 4.0)))
    for t in range(5):  # left brow
        out.append((18.0 + 26.0 * t / 4.0, 16.0 + 4.0 * np.sin(np.pi * t / 4.0)))
    for t in range(4):  # nose bridge
        out.append((0.0, 12.0 - 22.0 * t / 3.0))
    for t in range(5):  # nose base
        out.append((-12.0 + 6.0 * t, -16.0))
    eye = [(-7.0, 0.0), (-3.0, 3.0), (3.0, 3.0), (7.0, 0.0), (3.0, -3.0), (-3.0, -3.0)]
    for da, de in eye:
        out.append((-24.0 + da, 6.0 + de))
    for da, de in eye:
        out.append((24.0 + da, 6.0 + de))
    for t in range(12):  # outer lips, starting at the right corner
        ang = np.pi - 2.0 * np.pi * t / 12.0
        out.append((16.0 * np.cos(ang), -34.0 + 8.0 * np.sin(ang)))
    for t in range(8):  # inner lips
        ang = np.pi - 2.0 * np.pi * t / 8.0
        out.append((9.0 * np.cos(ang), -34.0 + 4.0 * np.sin(ang)))
    assert len(out) == LANDMARK_COUNT
    return np.stack([_direction(a, e) for a, e in out])


def _ray_cast(vertices, triangles, direction):
    """Moeller-Trumbore from the origin; returns (triangle index, barycentrics).

    The template is star-shaped around the origin, so each ray has exactly
    one outward intersection; the farthest positive hit is taken to shrug
    off grazing duplicates.
    """
    v0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - v0
    e2 = vertices[triangles[:, 2]] - v0
    p = np.cross(direction, e2)
    det = np.einsum("tc,tc->t", e1, p)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = -v0
    u = np.einsum("tc,tc->t", s, p) * inv
    q = np.cross(s, e1)
    v = (q @ direction) * inv
    t = np.einsum("tc,tc->t", e2, q) * inv
    hit = ok & (u >= -1e-9) & (v >= -1e-9) & (u + v <= 1.0 + 1e-9) & (t > 1e-9)
    if not hit.any():
        raise RuntimeError("landmark ray missed the template surface")
    idx = int(np.nonzero(hit)[0][np.argmax(t[hit])])
    bary = np.array([1.0 - u[idx] - v[idx], u[idx], v[idx]])
    bary = np.clip(bary, 0.0, 1.0)
    return idx, bary / bary.sum()


def synth_head(seed: int = 0, n_shape: int = 4, n_expression: int = 5) -> FaceModel:
    """Seeded low-poly head meeting every FaceModel invariant."""
    if n_shape < 4:
        raise ValueError("n_shape must be at least 4")
    if n_expression < 5:
        raise ValueError("n_expression must be at least 5")
    rng = np.random.default_rng(seed)
    dirs, tris = _sphere_grid()
    az = np.arctan2(dirs[:, 0], -dirs[:, 2])
    el = np.arcsin(np.clip(dirs[:, 1], -1.0, 1.0))

    template = dirs * np.array([0.82, 1.0, 0.92])
    # carved features, magnitudes jittered per seed so heads are distinct
    nose_m = 0.26 * (1.0 + 0.15 * rng.uniform(-1.0, 1.0))
    chin_m = 0.12 * (1.0 + 0.20 * rng.uniform(-1.0, 1.0))
    brow_m = 0.06 * (1.0 + 0.25 * rng.uniform(-1.0, 1.0))
    cheek_m = 0.05 * (1.0 + 0.25 * rng.uniform(-1.0, 1.0))
    nose_g = _angular_bump(dirs, _direction(0.0, -6.0), 0.16)
    chin_g = _angular_bump(dirs, _direction(0.0, -52.0), 0.25)
    brow_g = _band(az, el, 0.0, np.deg2rad(18.0), 0.60, 0.14)
    cheek_g = _band(az, el, np.deg2rad(34.0), np.deg2rad(-14.0), 0.28, 0.22) \
        + _band(az, el, np.deg2rad(-34.0), np.deg2rad(-14.0), 0.28, 0.22)
    bump_total = nose_m * nose_g + chin_m * chin_g + brow_m * brow_g + cheek_m * cheek_g
    for _ in range(5):  # identity-specific smooth perturbations
        center = rng.normal(size=3)
        sigma = rng.uniform(0.35, 0.7)
        mag = rng.uniform(-0.035, 0.035)
        bump_total = bump_total + mag * _angular_bump(dirs, center, sigma)
    template = template + bump_total[:, None] * dirs
    tris = _orient_outward(template, tris)

    x_hat = np.array([1.0, 0.0, 0.0])
    y_hat = np.array([0.0, 1.0, 0.0])
    z_hat = np.array([0.0, 0.0, 1.0])

    shape_fields = [
        np.outer(0.13 * _angular_bump(dirs, _direction(0.0, -8.0), 0.24), -z_hat),   # nose length
        np.outer(0.12 * _angular_bump(dirs, _direction(0.0, -50.0), 0.28), -y_hat),  # chin length
        np.outer(0.10 * brow_g, -z_hat),                                             # brow depth
        (0.11 * cheek_g * np.sign(dirs[:, 0]))[:, None] * x_hat,                     # cheek width
    ]
    for i in range(n_shape - 4):
        center = rng.normal(size=3)
        sigma = rng.uniform(0.3, 0.6)
        shape_fields.append(np.outer(0.08 * _angular_bump(dirs, center, sigma), rng.normal(size=3) * 0.6))
    shape_basis = np.stack(shape_fields, axis=2)

    jaw_g = _sigmoid((np.deg2rad(-26.0) - el) / 0.10) * _sigmoid((1.2 - np.abs(az)) / 0.15)
    corner_r = _band(az, el, np.deg2rad(-24.0), np.deg2rad(-30.0), 0.15, 0.12)
    corner_l = _band(az, el, np.deg2rad(24.0), np.deg2rad(-30.0), 0.15, 0.12)
    lips_g = _band(az, el, 0.0, np.deg2rad(-32.0), 0.30, 0.14)
    lip_center = _band(az, el, 0.0, np.deg2rad(-32.0), 0.15, 0.10)
    inner_brow = _band(az, el, 0.0, np.deg2rad(16.0), 0.22, 0.11)
    # in-plane signatures are kept distinct per dimension: weak perspective
    # discards z, so a mostly-frontal displacement would be near-unobservable
    expr_fields = [
        np.outer(jaw_g, np.array([0.0, -0.16, 0.04])),
        np.outer(corner_r, np.array([-0.07, 0.06, -0.02]))
        + np.outer(corner_l, np.array([0.07, 0.06, -0.02])),
        np.outer(lips_g, np.array([0.0, 0.0, -0.11]))
        + (-0.09 * lips_g * np.sign(az))[:, None] * x_hat
        + np.outer(0.05 * lip_center, y_hat),
        np.outer(0.09 * brow_g, y_hat),
        np.outer(-0.08 * inner_brow, y_hat) + np.outer(corner_r + corner_l, np.array([0.0, -0.05, 0.0])),
    ]
    names = list(EXPRESSION_NAMES)
    for i in range(n_expression - 5):
        center = rng.normal(size=3)
        sigma = rng.uniform(0.3, 0.6)
        expr_fields.append(np.outer(0.07 * _angular_bump(dirs, center, sigma), rng.normal(size=3) * 0.6))
        names.append(f"extra_{i}")
    expression_basis = np.stack(expr_fields, axis=2)

    joints = (
        Joint("global", None, np.zeros(3)),
        Joint("neck", 0, np.array([0.0, -0.85, 0.08])),
        Joint("jaw", 1, np.array([0.0, -0.25, 0.15])),
    )
    s_global = np.ones(len(dirs))
    s_neck = 2.2 * _sigmoid((np.deg2rad(-60.0) - el) / 0.08)
    s_jaw = 2.5 * _sigmoid((np.deg2rad(-24.0) - el) / 0.09) \
        * _sigmoid((1.15 - np.abs(az)) / 0.12) * _sigmoid((el + np.deg2rad(66.0)) / 0.09)
    scores = np.stack([s_global, s_neck, s_jaw], axis=1)
    skin_weights = scores / scores.sum(axis=1, keepdims=True)

    lm_tri = np.empty(LANDMARK_COUNT, dtype=np.int64)
    lm_bary = np.empty((LANDMARK_COUNT, 3))
    for i, d in enumerate(_landmark_directions()):
        lm_tri[i], lm_bary[i] = _ray_cast(template, tris, d)

    model = FaceModel(
        template_vertices=template,
        triangles=tris,
        shape_basis=shape_basis,
        expression_basis=expression_basis,
        joints=joints,
        skin_weights=skin_weights,
        landmark_triangles=lm_tri,
        landmark_barycentrics=lm_bary,
        expression_names=tuple(names),
    )
    validate_model(model)
    return model


def random_identity_params(model: FaceModel, seed: int = 0,
                           image_size: tuple[int, int] = (256, 256)) -> tuple[ModelParams, CameraParams]:
    """Seeded identity draw used by the demos and the end-to-end tests.

    Every component that is drawn stays bounded away from zero so relative
    recovery error is well-defined; neck rotation, roll, and depth
    translation are left at zero (weak perspective cannot observe depth).
    """
    rng = np.random.default_rng(seed)

    def signed(lo, hi):
        return float(rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi))

    focal = float(rng.uniform(92.0, 108.0))
    shape = np.array([signed(0.25, 0.75) for _ in range(model.n_shape)])
    expression = np.array([signed(0.15, 0.45) for _ in range(model.n_expression)])
    rotations = np.zeros((model.n_joints, 3))
    root = model.joint_index(model.root_joint)
    rotations[root, 0] = signed(0.06, 0.15)   # pitch
    rotations[root, 1] = signed(0.18, 0.35)   # yaw
    if "jaw" in model.joint_names:
        rotations[model.joint_index("jaw"), 0] = float(rng.uniform(0.08, 0.2))
    translation = np.array([signed(0.05, 0.15), signed(0.05, 0.15), 0.0])
    params = ModelParams(shape=shape, expression=expression,
                         rotations=rotations, translation=translation)
    camera = default_camera(width=image_size[0], height=image_size[1], focal=focal)
    return params, camera


def aligned_cohort_params(model: FaceModel, seed: int = 0,
                          image_size: tuple[int, int] = (256, 256)) -> tuple[ModelParams, CameraParams]:
    """Seeded identity draw for recognition probing: aligned crops.

    Recognition pipelines see detector-aligned crops, so this cohort shares
    one camera and zero translation; identities differ only in coefficients.
    Shape differences are kept subtle and the base yaw generous, which is
    the regime where sweeping a single parameter visibly degrades a
    nearest-centroid backend.
    """
    rng = np.random.default_rng(seed)

    def signed(lo, hi):
        return float(rng.choice([-1.0, 1.0]) * rng.uniform(lo, hi))

    shape = np.array([signed(0.1, 0.45) for _ in range(model.n_shape)])
    expression = np.array([signed(0.1, 0.3) for _ in range(model.n_expression)])
    rotations = np.zeros((model.n_joints, 3))
    root = model.joint_index(model.root_joint)
    rotations[root, 0] = signed(0.04, 0.10)   # pitch
    rotations[root, 1] = signed(0.45, 0.70)   # yaw
    if "jaw" in model.joint_names:
        rotations[model.joint_index("jaw"), 0] = float(rng.uniform(0.08, 0.15))
    params = ModelParams(shape=shape, expression=expression,
                         rotations=rotations, translation=np.zeros(3))
    camera = default_camera(width=image_size[0], height=image_size[1], focal=100.0)
    return params, camera
