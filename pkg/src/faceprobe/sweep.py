"""Single-parameter grids: scale one pose or expression dimension by
(1 + k) over a symmetric k range while copying everything else verbatim.

The grid always has an odd number of samples so the center frame is the
untouched base. A base value of exactly zero makes every multiplicative
frame identical to the base; that degeneracy is intentional and surfaced
as a warning, with an additive mode (value + k) available as an explicit
opt-in.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

from .images import Image, write_pgm
from .model import FaceModel, ModelParams, instantiate
from .render import CameraParams, LightingParams, render_mesh

MULTIPLICATIVE = "multiplicative"
ADDITIVE = "additive"

MANIFEST_HEADER = "identity,param,k,value,image_path"

# shorthand names for root-joint rotation axes
_ROOT_AXES = {"pitch": 0, "yaw": 1, "roll": 2}
_AXIS_NAMES = {"x": 0, "y": 1, "z": 2, "0": 0, "1": 1, "2": 2}


@dataclass(frozen=True)
class SweepSpec:
    target: str | tuple            # name, or ("pose"|"expression", index)
    span: float = 0.5              # K: k runs over [-K, K]
    n_samples: int = 21
    mode: str = MULTIPLICATIVE

    def __post_init__(self):
        if not self.span > 0:
            raise ValueError("span must be positive")
        if self.n_samples < 3 or self.n_samples % 2 == 0:
            raise ValueError("n_samples must be an odd integer >= 3")
        if self.mode not in (MULTIPLICATIVE, ADDITIVE):
            raise ValueError(f"unknown sweep mode {self.mode!r}")


@dataclass(frozen=True)
class SweepFrame:
    k: float
    params: ModelParams
    frame_id: str


@dataclass(frozen=True)
class _Target:
    kind: str                      # "pose" | "expression"
    label: str
    index: tuple                   # (expr index,) or (joint index, axis)

    def get(self, params: ModelParams) -> float:
        if self.kind == "expression":
            return float(params.expression[self.index[0]])
        return float(params.rotations[self.index])

    def set(self, params: ModelParams, value: float) -> ModelParams:
        shape = params.shape.copy()
        expression = params.expression.copy()
        rotations = params.rotations.copy()
        translation = params.translation.copy()
        if self.kind == "expression":
            expression[self.index[0]] = value
        else:
            rotations[self.index] = value
        return ModelParams(shape, expression, rotations, translation)


def resolve_target(model: FaceModel, target) -> _Target:
    """Expression names win over pose aliases; joint axes via 'rot:<joint>:<axis>'."""
    if isinstance(target, tuple):
        kind, index = target
        if kind == "expression":
            if isinstance(index, str):
                return resolve_target(model, index)
            if not 0 <= int(index) < model.n_expression:
                raise ValueError(f"expression index {index} out of range")
            return _Target("expression", model.expression_names[int(index)], (int(index),))
        if kind == "pose":
            flat = int(index)
            if not 0 <= flat < model.n_joints * 3:
                raise ValueError(f"pose index {flat} out of range")
            joint, axis = divmod(flat, 3)
            label = f"rot:{model.joints[joint].name}:{'xyz'[axis]}"
            return _Target("pose", label, (joint, axis))
        raise ValueError(f"unknown sweep target kind {kind!r}")
    name = str(target)
    if name in model.expression_names:
        return _Target("expression", name, (model.expression_names.index(name),))
    if name in _ROOT_AXES:
        root = model.joint_index(model.root_joint)
        return _Target("pose", name, (root, _ROOT_AXES[name]))
    if name.startswith("rot:"):
        parts = name.split(":")
        if len(parts) == 3 and parts[2] in _AXIS_NAMES:
            return _Target("pose", name, (model.joint_index(parts[1]), _AXIS_NAMES[parts[2]]))
    raise ValueError(
        f"unknown sweep target {name!r}; expected an expression name, "
        f"{sorted(_ROOT_AXES)}, or rot:<joint>:<x|y|z>")


def k_grid(spec: SweepSpec) -> list[float]:
    """Evenly spaced k over [-span, span] inclusive.

    Written so the center is exactly 0.0 and the grid is sign-symmetric
    bit-for-bit; agrees with -K + 2K*i/(n-1) to a few ulp.
    """
    n = spec.n_samples
    return [spec.span * (2 * i - (n - 1)) / (n - 1) for i in range(n)]


def generate_sweep(base: ModelParams, spec: SweepSpec, model: FaceModel) -> list[SweepFrame]:
    target = resolve_target(model, spec.target)
    value = target.get(base)
    if spec.mode == MULTIPLICATIVE and value == 0.0:
        warnings.warn(
            f"sweep target {target.label!r} is 0 in the base parameters; every "
            "multiplicative frame equals the base (use additive mode to vary it)",
            UserWarning, stacklevel=2)
    frames = []
    for i, k in enumerate(k_grid(spec)):
        new = (1.0 + k) * value if spec.mode == MULTIPLICATIVE else value + k
        frames.append(SweepFrame(k=k, params=target.set(base, new),
                                 frame_id=f"{target.label}_{i:02d}"))
    return frames


def render_sweep(model: FaceModel, base: ModelParams, spec: SweepSpec,
                 camera: CameraParams, light: LightingParams | None = None,
                 out_dir=None, identity: str = "id0"):
    """One render per frame; returns (frame, image) pairs plus manifest rows.

    Images are written as PGM files when out_dir is given; otherwise the
    manifest's image_path column is left empty.
    """
    target = resolve_target(model, spec.target)
    frames = generate_sweep(base, spec, model)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    rendered: list[tuple[SweepFrame, Image]] = []
    rows: list[dict] = []
    for i, frame in enumerate(frames):
        image = render_mesh(instantiate(model, frame.params), camera, light)
        path = ""
        if out_dir is not None:
            path = str(out_dir / f"{identity}__{target.label.replace(':', '-')}__{i:02d}.pgm")
            write_pgm(image, path)
        rendered.append((frame, image))
        rows.append({
            "identity": identity,
            "param": target.label,
            "k": frame.k,
            "value": target.get(frame.params),
            "image_path": path,
        })
    return rendered, rows


def encode_manifest(rows: list[dict]) -> str:
    lines = [MANIFEST_HEADER]
    for row in rows:
        lines.append(
            f"{row['identity']},{row['param']},{row['k']:.6f},{row['value']:.6f},{row['image_path']}")
    return "\n".join(lines) + "\n"


def write_manifest(rows: list[dict], path) -> None:
    Path(path).write_bytes(encode_manifest(rows).encode("utf-8"))


def read_manifest(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            out.append({
                "identity": row["identity"],
                "param": row["param"],
                "k": float(row["k"]),
                "value": float(row["value"]),
                "image_path": row["image_path"],
            })
        return out
