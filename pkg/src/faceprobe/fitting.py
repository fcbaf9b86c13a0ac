"""Landmark-based parameter recovery by damped nonlinear least squares.

The residual stacks confidence-weighted 2D reprojection errors over the 68
landmarks with quadratic coefficient priors. Steps solve the Marquardt
system (JtJ + damping * diag(JtJ)) d = -Jt r with central finite-difference
Jacobians, accepting a step only when the cost strictly decreases, so the
recorded cost history is monotone. Optimization is staged: rigid alignment
first, then expression and the remaining joints, then shape; cross-talk
between pose and expression is much worse when everything moves at once.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (FaceModel, ModelParams, ModelValidationError, instantiate,
                    landmarks3d, params_from_json, params_to_json, zero_params)
from .render import (PINHOLE, CameraParams, ProjectionError, camera_from_json,
                     camera_to_json, default_camera, project)

LANDMARK_COUNT = 68


class FitError(RuntimeError):
    """The optimizer could not evaluate or start from the given configuration."""


class FitDegenerateError(FitError):
    """Singular normal equations: the active parameters are unobservable."""


@dataclass(frozen=True)
class LandmarkSet:
    points: np.ndarray      # (68, 2) pixel coordinates
    confidence: np.ndarray  # (68,) in [0, 1]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        conf = np.asarray(self.confidence, dtype=np.float64)
        if pts.shape != (LANDMARK_COUNT, 2):
            raise ValueError(f"expected ({LANDMARK_COUNT}, 2) landmark points, got {pts.shape}")
        if conf.shape != (LANDMARK_COUNT,):
            raise ValueError(f"expected {LANDMARK_COUNT} confidences, got {conf.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("landmark coordinates must be finite")
        if (conf < 0).any() or (conf > 1).any():
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "confidence", conf)


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 100        # per stage
    damping_init: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 0.2
    damping_max: float = 1e10
    tolerance: float = 1e-12         # relative cost decrease
    shape_prior: float = 0.1
    expression_prior: float = 0.1
    stages: tuple[tuple[str, ...], ...] | None = None  # None -> default_stages(model)

    def __post_init__(self):
        if self.shape_prior < 0 or self.expression_prior < 0:
            raise ValueError("prior weights must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class FitResult:
    params: ModelParams
    camera: CameraParams
    rms_error: float              # unweighted RMS landmark reprojection error, pixels
    cost_history: tuple[float, ...]
    converged: bool


def default_stages(model: FaceModel) -> tuple[tuple[str, ...], ...]:
    root = model.root_joint
    rest = tuple(f"rot:{j.name}" for j in model.joints if j.name != root)
    rigid = ("camera", "translation", f"rot:{root}")
    with_expression = rigid + rest + ("expression",)
    return (rigid, with_expression, with_expression + ("shape",))


def residuals(model: FaceModel, params: ModelParams, camera: CameraParams,
              landmarks: LandmarkSet, shape_prior: float = 0.1,
              expression_prior: float = 0.1) -> np.ndarray:
    """[confidence-weighted reprojection (136,), sqrt(ws)*s, sqrt(we)*e]."""
    mesh = instantiate(model, params)
    proj = project(landmarks3d(mesh, model), camera)
    lm = ((proj - landmarks.points) * landmarks.confidence[:, None]).ravel()
    return np.concatenate([
        lm,
        np.sqrt(shape_prior) * params.shape,
        np.sqrt(expression_prior) * params.expression,
    ])


def _cost(r: np.ndarray) -> float:
    return 0.5 * float(r @ r)


def jacobian_fd(fn, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian; step is relative with a unit floor."""
    r0 = fn(x)
    out = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(float(x[j])))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        out[:, j] = (fn(xp) - fn(xm)) / (2.0 * h)
    return out


class _Packing:
    """Maps the active blocks of (params, camera) to a flat vector and back."""

    def __init__(self, model: FaceModel, camera_mode: str, blocks: tuple[str, ...]):
        self.model = model
        self.entries: list[tuple[str, int]] = []
        n_trans = 3 if camera_mode == PINHOLE else 2  # depth is unobservable under weak perspective
        for block in blocks:
            if block == "camera":
                self.entries.append((block, 1))
            elif block == "translation":
                self.entries.append((block, n_trans))
            elif block.startswith("rot:"):
                model.joint_index(block[4:])
                self.entries.append((block, 3))
            elif block == "expression":
                self.entries.append((block, model.n_expression))
            elif block == "shape":
                self.entries.append((block, model.n_shape))
            else:
                raise ValueError(f"unknown fit block {block!r}")
        self.size = sum(n for _, n in self.entries)

    def pack(self, params: ModelParams, camera: CameraParams) -> np.ndarray:
        parts = []
        for block, n in self.entries:
            if block == "camera":
                parts.append([camera.focal])
            elif block == "translation":
                parts.append(params.translation[:n])
            elif block.startswith("rot:"):
                parts.append(params.rotations[self.model.joint_index(block[4:])])
            elif block == "expression":
                parts.append(params.expression)
            elif block == "shape":
                parts.append(params.shape)
        return np.concatenate(parts).astype(np.float64)

    def unpack(self, x: np.ndarray, params: ModelParams,
               camera: CameraParams) -> tuple[ModelParams, CameraParams]:
        shape = params.shape.copy()
        expression = params.expression.copy()
        rotations = params.rotations.copy()
        translation = params.translation.copy()
        focal = camera.focal
        i = 0
        for block, n in self.entries:
            chunk = x[i : i + n]
            i += n
            if block == "camera":
                focal = float(chunk[0])
            elif block == "translation":
                translation[:n] = chunk
            elif block.startswith("rot:"):
                rotations[self.model.joint_index(block[4:])] = chunk
            elif block == "expression":
                expression = chunk.copy()
            elif block == "shape":
                shape = chunk.copy()
        new_params = ModelParams(shape, expression, rotations, translation)
        new_camera = CameraParams(camera.mode, focal, camera.principal,
                                  camera.width, camera.height)
        return new_params, new_camera


def initial_estimate(model: FaceModel, landmarks: LandmarkSet,
                     camera: CameraParams) -> tuple[ModelParams, CameraParams]:
    """Similarity seed: scale from 2D/3D landmark spread, shift from centroids."""
    params = zero_params(model)
    lm3 = landmarks3d(instantiate(model, params), model)
    spread3 = np.sqrt(lm3[:, 0].var() + lm3[:, 1].var())
    spread2 = np.sqrt(landmarks.points[:, 0].var() + landmarks.points[:, 1].var())
    cx, cy = camera.principal
    depth0 = 4.0
    if camera.mode == PINHOLE:
        focal = max(spread2 / max(spread3, 1e-9), 1e-3) * depth0
        scale = focal / depth0
    else:
        focal = max(spread2 / max(spread3, 1e-9), 1e-3)
        scale = focal
    tx = (landmarks.points[:, 0].mean() - cx) / scale - lm3[:, 0].mean()
    ty = (cy - landmarks.points[:, 1].mean()) / scale - lm3[:, 1].mean()
    tz = depth0 if camera.mode == PINHOLE else 0.0
    params = ModelParams(params.shape, params.expression, params.rotations,
                         np.array([tx, ty, tz]))
    seeded = CameraParams(camera.mode, focal, camera.principal, camera.width, camera.height)
    return params, seeded


def fit_landmarks(model: FaceModel, landmarks: LandmarkSet,
                  config: FitConfig | None = None,
                  init: tuple[ModelParams, CameraParams] | None = None,
                  camera: CameraParams | None = None) -> FitResult:
    """Staged Levenberg-Marquardt fit. `camera` fixes geometry (mode, size,
    principal point) when no full init is given; focal length is always
    optimized."""
    config = config or FitConfig()
    if init is not None:
        params, cam = init
    else:
        params, cam = initial_estimate(model, landmarks, camera or default_camera())

    def make_residual(packing, base_params, base_camera):
        def fn(x):
            p, c = packing.unpack(x, base_params, base_camera)
            return residuals(model, p, c, landmarks,
                             config.shape_prior, config.expression_prior)
        return fn

    def safe(fn, x):
        try:
            return fn(x)
        except (ProjectionError, ValueError, ModelValidationError):
            return None

    stages = config.stages or default_stages(model)
    history: list[float] = []
    try:
        first = residuals(model, params, cam, landmarks,
                          config.shape_prior, config.expression_prior)
    except (ProjectionError, ValueError, ModelValidationError) as exc:
        raise FitError(f"cannot evaluate residuals at the initial estimate: {exc}") from exc
    cost = _cost(first)
    history.append(cost)
    converged = False

    for blocks in stages:
        packing = _Packing(model, cam.mode, blocks)
        fn = make_residual(packing, params, cam)
        x = packing.pack(params, cam)
        r = safe(fn, x)
        if r is None:
            raise FitError("cannot evaluate residuals at a stage start")
        lam = config.damping_init
        converged = False
        for _ in range(config.max_iterations):
            jac = _jacobian_safe(fn, x, r)
            grad = jac.T @ r
            if not np.any(grad):
                converged = True
                break
            jtj = jac.T @ jac
            diag = np.diag(jtj).copy()
            free = diag > 0.0
            if not free.any():
                raise FitDegenerateError("all active parameters have zero gradient structure")
            accepted = False
            while lam <= config.damping_max:
                a = jtj + lam * np.diag(diag)
                # parameters with no observable effect are frozen for this step
                if not free.all():
                    a = a.copy()
                    for i in np.nonzero(~free)[0]:
                        a[i, :] = 0.0
                        a[:, i] = 0.0
                        a[i, i] = 1.0
                rhs = -grad.copy()
                rhs[~free] = 0.0
                try:
                    delta = np.linalg.solve(a, rhs)
                except np.linalg.LinAlgError as exc:
                    raise FitDegenerateError(f"singular normal equations: {exc}") from exc
                x_new = x + delta
                r_new = safe(fn, x_new)
                if r_new is not None:
                    c_new = _cost(r_new)
                    if c_new < cost:
                        rel = (cost - c_new) / cost if cost > 0 else 0.0
                        x, r, cost = x_new, r_new, c_new
                        history.append(cost)
                        lam = max(lam * config.damping_decrease, 1e-12)
                        accepted = True
                        if rel < config.tolerance:
                            converged = True
                        break
                lam *= config.damping_increase
            if not accepted or converged:
                break
        params, cam = packing.unpack(x, params, cam)

    mesh = instantiate(model, params)
    proj = project(landmarks3d(mesh, model), cam)
    rms = float(np.sqrt(np.mean(np.sum((proj - landmarks.points) ** 2, axis=1))))
    return FitResult(params=params, camera=cam, rms_error=rms,
                     cost_history=tuple(history), converged=converged)


def _jacobian_safe(fn, x: np.ndarray, r0: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """Central differences with one-sided fallback when a trial point is invalid."""
    out = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = rel_step * max(1.0, abs(float(x[j])))
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        rp = _try(fn, xp)
        rm = _try(fn, xm)
        if rp is not None and rm is not None:
            out[:, j] = (rp - rm) / (2.0 * h)
        elif rp is not None:
            out[:, j] = (rp - r0) / h
        elif rm is not None:
            out[:, j] = (r0 - rm) / h
        else:
            raise FitError(f"residuals undefined on both sides of parameter {j}")
    return out


def _try(fn, x):
    try:
        return fn(x)
    except (ProjectionError, ValueError, ModelValidationError):
        return None


def landmarks_to_json(landmarks: LandmarkSet) -> list:
    return [[float(x), float(y), float(c)]
            for (x, y), c in zip(landmarks.points, landmarks.confidence)]


def landmarks_from_json(doc) -> LandmarkSet:
    arr = np.asarray(doc, dtype=np.float64)
    if arr.shape != (LANDMARK_COUNT, 3):
        raise ValueError(f"landmark file must hold {LANDMARK_COUNT} [x, y, confidence] rows")
    return LandmarkSet(points=arr[:, :2], confidence=arr[:, 2])


def save_landmarks(landmarks: LandmarkSet, path) -> None:
    Path(path).write_text(json.dumps(landmarks_to_json(landmarks)), encoding="utf-8")


def load_landmarks(path) -> LandmarkSet:
    return landmarks_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def fit_result_to_json(model: FaceModel, result: FitResult) -> dict:
    return {
        "params": params_to_json(model, result.params),
        "camera": camera_to_json(result.camera),
        "rms_error": result.rms_error,
        "cost_history": list(result.cost_history),
        "converged": result.converged,
    }


def fit_result_from_json(model: FaceModel, doc: dict) -> FitResult:
    return FitResult(
        params=params_from_json(model, doc["params"]),
        camera=camera_from_json(doc["camera"]),
        rms_error=float(doc["rms_error"]),
        cost_history=tuple(float(c) for c in doc["cost_history"]),
        converged=bool(doc["converged"]),
    )
