"""Sensitivity curves: sweep one parameter per identity, classify every
rendered frame against a gallery, and report accuracy as a function of k.

Identities are processed in ascending id order and frames in ascending k,
so two runs over the same inputs produce byte-identical CSV output. A
symmetry score (mean |acc(k) - acc(-k)|) is reported as information, not
asserted: whether a response curve is asymmetric depends on the data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import FaceModel, ModelParams, instantiate
from .recognize import BackendError, Gallery, classify, enroll
from .render import CameraParams, LightingParams, render_mesh
from .sweep import SweepSpec, generate_sweep, resolve_target

CURVE_HEADER = "param,k,accuracy,n_identities"


class DiagnosisError(RuntimeError):
    """Aborted diagnosis; `completed` holds the (id, k, prediction) triples
    finished before the failure."""

    def __init__(self, message: str, completed=()):
        super().__init__(message)
        self.completed = list(completed)


@dataclass(frozen=True)
class ResponseCurve:
    param: str
    ks: tuple[float, ...]
    accuracies: tuple[float, ...]
    counts: tuple[int, ...]        # samples aggregated at each k
    identity_count: int

    def __post_init__(self):
        if not (len(self.ks) == len(self.accuracies) == len(self.counts)):
            raise ValueError("ks, accuracies, and counts must be aligned")
        if any(c <= 0 for c in self.counts) or self.identity_count <= 0:
            raise ValueError("counts must be positive")
        if any(not 0.0 <= a <= 1.0 for a in self.accuracies):
            raise ValueError("accuracies must lie in [0, 1]")


def accuracy(predictions) -> float:
    """Fraction of (true id, predicted id) pairs that match."""
    pairs = list(predictions)
    if not pairs:
        raise ValueError("accuracy of an empty prediction list is undefined")
    correct = sum(1 for truth, pred in pairs if truth == pred)
    return correct / len(pairs)


def enroll_base_renders(model: FaceModel, fits, backend,
                        light: LightingParams | None = None,
                        gallery: Gallery | None = None) -> Gallery:
    """Enroll each identity on the render of its own base parameters (the
    k = 0 frame of any sweep)."""
    gallery = gallery or Gallery.empty()
    for identity in sorted(fits):
        params, camera = fits[identity]
        image = render_mesh(instantiate(model, params), camera, light)
        gallery = enroll(gallery, identity, [image], embed=backend.embed_image)
    return gallery


def run_diagnosis(model: FaceModel, fits, spec: SweepSpec, backend,
                  gallery: Gallery, light: LightingParams | None = None) -> ResponseCurve:
    """fits: mapping identity -> (ModelParams, CameraParams), all enrolled."""
    ids = sorted(fits)
    if not ids:
        raise DiagnosisError("no identities to diagnose")
    missing = [i for i in ids if i not in gallery.ids]
    if missing:
        raise DiagnosisError(f"identities not enrolled in the gallery: {missing}")

    param_label = resolve_target(model, spec.target).label
    correct = np.zeros(spec.n_samples, dtype=np.int64)
    ks = None
    completed: list[tuple[str, float, str]] = []
    for identity in ids:
        params, camera = fits[identity]
        frames = generate_sweep(params, spec, model)
        if ks is None:
            ks = [f.k for f in frames]
        for j, frame in enumerate(frames):
            image = render_mesh(instantiate(model, frame.params), camera, light)
            try:
                embedding = backend.embed_image(image)
            except BackendError as exc:
                raise DiagnosisError(
                    f"backend failed at identity {identity!r}, k={frame.k:.6f}: {exc}",
                    completed) from exc
            predicted, _ = classify(gallery, embedding)
            completed.append((identity, frame.k, predicted))
            if predicted == identity:
                correct[j] += 1

    n = len(ids)
    return ResponseCurve(
        param=param_label,
        ks=tuple(round(k, 6) for k in ks),
        accuracies=tuple(int(c) / n for c in correct),
        counts=(n,) * len(ks),
        identity_count=n,
    )


def encode_curve(curve: ResponseCurve) -> str:
    lines = [CURVE_HEADER]
    for k, acc, count in zip(curve.ks, curve.accuracies, curve.counts):
        lines.append(f"{curve.param},{k:.6f},{acc:.6f},{count}")
    return "\n".join(lines) + "\n"


def write_curve(curve: ResponseCurve, path) -> None:
    Path(path).write_bytes(encode_curve(curve).encode("utf-8"))


def read_curve(path) -> ResponseCurve:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != CURVE_HEADER:
        raise ValueError(f"not a response-curve CSV: {path}")
    param = None
    ks, accs, counts = [], [], []
    for line in lines[1:]:
        p, k, acc, n = line.split(",")
        param = p
        n = int(n)
        ks.append(float(k))
        # reconstruct the exact rational from the 6-decimal rendering
        accs.append(round(float(acc) * n) / n)
        counts.append(n)
    if param is None:
        raise ValueError(f"response-curve CSV has no data rows: {path}")
    return ResponseCurve(param=param, ks=tuple(ks), accuracies=tuple(accs),
                         counts=tuple(counts), identity_count=counts[0])


def curve_summary(curve: ResponseCurve) -> dict:
    """Peak location/value, minimum, and the informational symmetry score."""
    accs = np.asarray(curve.accuracies)
    ks = np.asarray(curve.ks)
    peak = float(accs.max())
    peaked = np.nonzero(accs == peak)[0]
    best = min(peaked, key=lambda i: (abs(ks[i]), ks[i]))
    by_k = dict(zip(curve.ks, curve.accuracies))
    diffs = [abs(by_k[k] - by_k[-k]) for k in curve.ks if k > 0 and -k in by_k]
    return {
        "param": curve.param,
        "peak_k": float(ks[best]),
        "peak_acc": peak,
        "min_acc": float(accs.min()),
        "symmetry_score": float(np.mean(diffs)) if diffs else 0.0,
    }


def write_summary(curve: ResponseCurve, path) -> None:
    Path(path).write_text(json.dumps(curve_summary(curve), indent=2) + "\n", encoding="utf-8")
