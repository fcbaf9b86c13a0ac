"""Parametric head model: blendshapes over a template mesh plus linear
blend skinning over a small joint chain.

Meshes are produced by a pure function of (model, coefficients); models and
parameter vectors are immutable after construction, so they can be shared
freely across parallel workers. The on-disk format is a single JSON
document with ``format_version`` 1; the loader re-validates every
structural invariant.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MODEL_FORMAT_VERSION = 1
LANDMARK_COUNT = 68


class ModelValidationError(ValueError):
    """A model or parameter vector violates a structural invariant."""


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None  # index into the joint list; None marks the root
    rest: np.ndarray    # (3,) rest-pose position in model units


@dataclass(frozen=True)
class FaceModel:
    template_vertices: np.ndarray      # (n_vertices, 3)
    triangles: np.ndarray              # (n_triangles, 3) vertex indices
    shape_basis: np.ndarray            # (n_vertices, 3, n_shape)
    expression_basis: np.ndarray       # (n_vertices, 3, n_expression)
    joints: tuple[Joint, ...]
    skin_weights: np.ndarray           # (n_vertices, n_joints), rows sum to 1
    landmark_triangles: np.ndarray     # (68,) triangle indices
    landmark_barycentrics: np.ndarray  # (68, 3) weights summing to 1
    expression_names: tuple[str, ...]

    @property
    def n_vertices(self) -> int:
        return self.template_vertices.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[2]

    @property
    def n_expression(self) -> int:
        return self.expression_basis.shape[2]

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(f"no joint named {name!r} (have {self.joint_names})")

    @property
    def root_joint(self) -> str:
        return self.joints[_root_index(self.joints)].name


@dataclass(frozen=True)
class ModelParams:
    shape: np.ndarray        # (n_shape,)
    expression: np.ndarray   # (n_expression,)
    rotations: np.ndarray    # (n_joints, 3) axis-angle, radians
    translation: np.ndarray  # (3,) applied after skinning, model units


@dataclass(frozen=True)
class Mesh:
    positions: np.ndarray       # (n_vertices, 3)
    triangles: np.ndarray       # (n_triangles, 3), shared with the model
    vertex_normals: np.ndarray  # (n_vertices, 3) unit vectors


def zero_params(model: FaceModel) -> ModelParams:
    return ModelParams(
        shape=np.zeros(model.n_shape),
        expression=np.zeros(model.n_expression),
        rotations=np.zeros((model.n_joints, 3)),
        translation=np.zeros(3),
    )


def copy_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        shape=params.shape.copy(),
        expression=params.expression.copy(),
        rotations=params.rotations.copy(),
        translation=params.translation.copy(),
    )


def _root_index(joints) -> int:
    roots = [i for i, j in enumerate(joints) if j.parent is None]
    if len(roots) != 1:
        raise ModelValidationError(f"expected exactly one root joint, found {len(roots)}")
    return roots[0]


def validate_model(model: FaceModel) -> None:
    n = model.n_vertices
    if model.template_vertices.shape != (n, 3) or not np.isfinite(model.template_vertices).all():
        raise ModelValidationError("template_vertices must be finite (n, 3)")
    tri = model.triangles
    if tri.ndim != 2 or tri.shape[1] != 3:
        raise ModelValidationError(f"triangles must be (t, 3), got {tri.shape}")
    if tri.size and (tri.min() < 0 or tri.max() >= n):
        raise ModelValidationError("triangle index out of range")
    for name, basis in (("shape_basis", model.shape_basis), ("expression_basis", model.expression_basis)):
        if basis.ndim != 3 or basis.shape[:2] != (n, 3) or not np.isfinite(basis).all():
            raise ModelValidationError(f"{name} must be finite (n, 3, k), got {basis.shape}")
    if len(model.expression_names) != model.n_expression:
        raise ModelValidationError("expression_names length must match expression_basis")

    k = model.n_joints
    root = _root_index(model.joints)
    for i, joint in enumerate(model.joints):
        if np.asarray(joint.rest).shape != (3,) or not np.isfinite(joint.rest).all():
            raise ModelValidationError(f"joint {joint.name!r} rest position must be a finite 3-vector")
        if joint.parent is not None and not (0 <= joint.parent < k):
            raise ModelValidationError(f"joint {joint.name!r} parent index out of range")
    # walk to the root from every joint; a revisit inside one walk is a cycle
    for i in range(k):
        seen = set()
        j = i
        while model.joints[j].parent is not None:
            if j in seen:
                raise ModelValidationError("joint parents contain a cycle")
            seen.add(j)
            j = model.joints[j].parent
        if j != root:
            raise ModelValidationError("joints do not form a single tree rooted at the root joint")
        if model.joints[i].parent is not None and model.joints[i].parent >= i:
            raise ModelValidationError("joints must be listed parent before child")

    w = model.skin_weights
    if w.shape != (n, k):
        raise ModelValidationError(f"skin_weights must be ({n}, {k}), got {w.shape}")
    if (w < 0).any():
        raise ModelValidationError("skin weights must be non-negative")
    if np.abs(w.sum(axis=1) - 1.0).max() > 1e-6:
        raise ModelValidationError("skin weight rows must sum to 1 within 1e-6")

    lt = model.landmark_triangles
    lb = model.landmark_barycentrics
    if lt.shape != (LANDMARK_COUNT,) or lb.shape != (LANDMARK_COUNT, 3):
        raise ModelValidationError("landmark embedding must cover exactly 68 points")
    if lt.size and (lt.min() < 0 or lt.max() >= tri.shape[0]):
        raise ModelValidationError("landmark triangle index out of range")
    if (lb < -1e-12).any() or (lb > 1.0 + 1e-12).any():
        raise ModelValidationError("landmark barycentric weights must lie in [0, 1]")
    if np.abs(lb.sum(axis=1) - 1.0).max() > 1e-6:
        raise ModelValidationError("landmark barycentric weights must sum to 1 within 1e-6")


def validate_params(model: FaceModel, params: ModelParams) -> None:
    if params.shape.shape != (model.n_shape,):
        raise ModelValidationError(
            f"shape coefficients have length {params.shape.shape}, model expects {model.n_shape}")
    if params.expression.shape != (model.n_expression,):
        raise ModelValidationError(
            f"expression coefficients have length {params.expression.shape}, model expects {model.n_expression}")
    if params.rotations.shape != (model.n_joints, 3):
        raise ModelValidationError(
            f"rotations have shape {params.rotations.shape}, model expects ({model.n_joints}, 3)")
    if params.translation.shape != (3,):
        raise ModelValidationError("translation must be a 3-vector")
    for name, arr in (("shape", params.shape), ("expression", params.expression),
                      ("rotations", params.rotations), ("translation", params.translation)):
        if not np.isfinite(arr).all():
            raise ModelValidationError(f"non-finite value in {name} parameters")


def rodrigues(rvec) -> np.ndarray:
    """Axis-angle (magnitude = angle in radians) to rotation matrix."""
    rvec = np.asarray(rvec, dtype=np.float64)
    theta = float(np.linalg.norm(rvec))
    kx, ky, kz = rvec
    skew = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    if theta < 1e-8:
        # analytic small-angle limit; exact identity at zero
        return np.eye(3) + skew
    k = skew / theta
    return np.eye(3) + np.sin(theta) * k + (1.0 - np.cos(theta)) * (k @ k)


def _skinning_transforms(model: FaceModel, rotations: np.ndarray):
    """Per-joint affine (R, t) mapping rest-pose points to posed points.

    World transforms compose parent-to-child; the skinning transform folds
    in the inverse rest translation so it applies directly to mesh vertices.
    """
    k = model.n_joints
    world_r = np.empty((k, 3, 3))
    world_t = np.empty((k, 3))
    for i, joint in enumerate(model.joints):
        r_local = rodrigues(rotations[i])
        if joint.parent is None:
            world_r[i] = r_local
            world_t[i] = joint.rest
        else:
            p = joint.parent
            offset = joint.rest - model.joints[p].rest
            world_r[i] = world_r[p] @ r_local
            world_t[i] = world_r[p] @ offset + world_t[p]
    rests = np.stack([j.rest for j in model.joints])
    skin_t = world_t - np.einsum("kij,kj->ki", world_r, rests)
    return world_r, skin_t


def vertex_normals(positions: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized per vertex."""
    normals = np.zeros_like(positions)
    if triangles.size:
        p0 = positions[triangles[:, 0]]
        p1 = positions[triangles[:, 1]]
        p2 = positions[triangles[:, 2]]
        face = np.cross(p1 - p0, p2 - p0)  # length 2*area => area weighting for free
        for c in range(3):
            np.add.at(normals, triangles[:, c], face)
    lengths = np.linalg.norm(normals, axis=1)
    degenerate = lengths < 1e-20
    normals[degenerate] = (0.0, 0.0, 1.0)
    lengths[degenerate] = 1.0
    return normals / lengths[:, None]


def instantiate(model: FaceModel, params: ModelParams) -> Mesh:
    """Blendshapes, then linear blend skinning, then the global translation."""
    validate_params(model, params)
    shaped = model.template_vertices
    if model.n_shape:
        shaped = shaped + model.shape_basis @ params.shape
    if model.n_expression:
        shaped = shaped + model.expression_basis @ params.expression
    rot, trans = _skinning_transforms(model, params.rotations)
    # accumulate weighted rigid corrections (R - I)v + t; identical algebra to
    # blending the transforms directly, but exactly zero at the rest pose
    delta = np.zeros_like(shaped)
    eye = np.eye(3)
    for k in range(model.n_joints):
        w = model.skin_weights[:, k]
        if w.any():
            delta += w[:, None] * (shaped @ (rot[k] - eye).T + trans[k])
    positions = shaped + delta + params.translation
    return Mesh(positions, model.triangles, vertex_normals(positions, model.triangles))


def landmarks3d(mesh: Mesh, model: FaceModel) -> np.ndarray:
    """68 barycentric surface points, (68, 3)."""
    lt = model.landmark_triangles
    if lt.size and (lt.min() < 0 or lt.max() >= mesh.triangles.shape[0]):
        raise ModelValidationError("landmark embedding references an invalid triangle index")
    corners = mesh.positions[mesh.triangles[lt]]  # (68, 3, 3)
    return np.einsum("lvc,lv->lc", corners, model.landmark_barycentrics)


def model_to_json(model: FaceModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "template_vertices": model.template_vertices.tolist(),
        "triangles": model.triangles.tolist(),
        "shape_basis": model.shape_basis.tolist(),
        "expression_basis": model.expression_basis.tolist(),
        "joints": [
            {"name": j.name, "parent": j.parent, "rest": j.rest.tolist()} for j in model.joints
        ],
        "skin_weights": model.skin_weights.tolist(),
        "landmark_embedding": [
            [int(t)] + b.tolist()
            for t, b in zip(model.landmark_triangles, model.landmark_barycentrics)
        ],
        "expression_names": list(model.expression_names),
    }


def model_from_json(doc: dict) -> FaceModel:
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelValidationError(f"unsupported model format_version {version!r}")
    embedding = doc["landmark_embedding"]
    model = FaceModel(
        template_vertices=np.asarray(doc["template_vertices"], dtype=np.float64),
        triangles=np.asarray(doc["triangles"], dtype=np.int64),
        shape_basis=np.asarray(doc["shape_basis"], dtype=np.float64),
        expression_basis=np.asarray(doc["expression_basis"], dtype=np.float64),
        joints=tuple(
            Joint(j["name"], j["parent"], np.asarray(j["rest"], dtype=np.float64))
            for j in doc["joints"]
        ),
        skin_weights=np.asarray(doc["skin_weights"], dtype=np.float64),
        landmark_triangles=np.asarray([e[0] for e in embedding], dtype=np.int64),
        landmark_barycentrics=np.asarray([e[1:4] for e in embedding], dtype=np.float64),
        expression_names=tuple(doc["expression_names"]),
    )
    validate_model(model)
    return model


def save_model(model: FaceModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_json(model)), encoding="utf-8")


def load_model(path) -> FaceModel:
    return model_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def params_to_json(model: FaceModel, params: ModelParams) -> dict:
    return {
        "shape": params.shape.tolist(),
        "expression": params.expression.tolist(),
        "rotations": {j.name: params.rotations[i].tolist() for i, j in enumerate(model.joints)},
        "translation": params.translation.tolist(),
    }


def params_from_json(model: FaceModel, doc: dict) -> ModelParams:
    rotations = np.zeros((model.n_joints, 3))
    for name, value in doc.get("rotations", {}).items():
        rotations[model.joint_index(name)] = np.asarray(value, dtype=np.float64)
    params = ModelParams(
        shape=np.asarray(doc.get("shape", np.zeros(model.n_shape)), dtype=np.float64),
        expression=np.asarray(doc.get("expression", np.zeros(model.n_expression)), dtype=np.float64),
        rotations=rotations,
        translation=np.asarray(doc.get("translation", np.zeros(3)), dtype=np.float64),
    )
    validate_params(model, params)
    return params
